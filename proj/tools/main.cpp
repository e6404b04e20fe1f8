#include "wsml/cli.hpp"

int main(int argc, char **argv) { return wsml::cli::main(argc, argv); }
