#pragma once

namespace wsml::cli {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point for the wsml command-line tool.
int main(int argc, char **argv);

} // namespace wsml::cli
