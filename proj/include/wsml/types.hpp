#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wsml {

using Real   = double;
using Index  = Eigen::Index;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// 0/1 label matrix (ground truth or derived targets), samples along rows.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr Real kProbClamp = 1e-7;

// Errors. Callers that need exit-code mapping distinguish ConfigError (bad
// user input) from everything else.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string const &message, long line)
      : Error("line " + std::to_string(line) + ": " + message), message_(message), line_(line) {}
  long line() const noexcept { return line_; }
  std::string const &message() const noexcept { return message_; }

 private:
  std::string message_;
  long line_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch)
      : Error("non-finite loss at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

} // namespace wsml
