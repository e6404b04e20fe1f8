#pragma once

#include "types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsml {

enum class LabelState : std::uint8_t {
  ObservedPositive,
  ObservedNegative,
  Unknown,
  CorrectedPositive,
};

constexpr bool is_observed(LabelState s) {
  return s == LabelState::ObservedPositive || s == LabelState::ObservedNegative;
}

/// Assume-Negative target of a single label state.
constexpr Real an_target(LabelState s) {
  return (s == LabelState::ObservedPositive || s == LabelState::CorrectedPositive) ? 1.0 : 0.0;
}

char state_token(LabelState s);
LabelState parse_state_token(char c); // throws Error on an illegal token

/// N x K label-state matrix. Contents are fixed at construction except for
/// the single permitted transition Unknown -> CorrectedPositive.
class LabelStates {
 public:
  LabelStates() = default;
  LabelStates(Index rows, Index cols, LabelState fill = LabelState::Unknown);
  LabelStates(Index rows, Index cols, std::vector<LabelState> row_major);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }

  LabelState operator()(Index i, Index k) const {
    return data_[static_cast<std::size_t>(i * cols_ + k)];
  }

  /// Throws ContractError for any transition other than Unknown -> CorrectedPositive.
  void transition(Index i, Index k, LabelState to);

  LabelStates select_rows(std::span<const Index> rows) const;
  Index count(LabelState s) const;
  Index count_observed() const;
  bool fully_observed() const;

  std::vector<LabelState> const &row_major() const noexcept { return data_; }

  friend bool operator==(LabelStates const &, LabelStates const &) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<LabelState> data_;
};

/// Assume-Negative targets: observed or corrected positives -> 1, everything else -> 0.
Matrix an_targets(LabelStates const &states);

/// Features plus partial labels. Ground truth, when present, is kept for
/// analysis only; the training path takes features() and states() and never
/// the truth accessor.
class PartialDataset {
 public:
  PartialDataset() = default;
  PartialDataset(Matrix features, LabelStates states,
                 std::optional<BinaryMatrix> truth = std::nullopt);

  Index size() const noexcept { return features_.rows(); }
  Index dim() const noexcept { return features_.cols(); }
  Index num_classes() const noexcept { return states_.cols(); }

  Matrix const &features() const noexcept { return features_; }
  LabelStates const &states() const noexcept { return states_; }
  LabelStates &mutable_states() noexcept { return states_; }

  bool has_truth() const noexcept { return truth_.has_value(); }
  BinaryMatrix const &truth() const; // throws Error when absent

  PartialDataset select_rows(std::span<const Index> rows) const;

  /// Throws ContractError if an observed state disagrees with truth.
  void check_truth_agreement() const;

  friend bool operator==(PartialDataset const &, PartialDataset const &) = default;

 private:
  Matrix features_;
  LabelStates states_;
  std::optional<BinaryMatrix> truth_;
};

struct SyntheticSpec {
  Index samples = 0;
  Index dim = 0;
  Index classes = 0;
  Real positive_rate = 0.3;
  Real temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const; // throws ConfigError
};

/// Fully observed dataset (truth == observed states) from a hidden linear
/// logistic model. Every sample has at least one positive.
PartialDataset generate_synthetic(SyntheticSpec const &spec);

/// Keep one uniformly chosen positive per sample; everything else becomes Unknown.
PartialDataset make_single_positive(PartialDataset const &full, std::uint64_t seed);

/// Keep a uniform floor(fraction * N * K)-subset of entries observed.
PartialDataset make_fraction_observed(PartialDataset const &full, Real fraction,
                                      std::uint64_t seed);

/// Rows kept by subsample(), ascending.
std::vector<Index> subsample_rows(Index n, Real fraction, std::uint64_t seed);

/// Keep floor(fraction * N) uniformly chosen samples, original order preserved.
PartialDataset subsample(PartialDataset const &ds, Real fraction, std::uint64_t seed);

void save_dataset(PartialDataset const &ds, std::filesystem::path const &path,
                  std::string const &trailer_comment = {});
PartialDataset load_dataset(std::filesystem::path const &path);

// Stream variants, used by the file functions and by tests.
void write_dataset(PartialDataset const &ds, std::ostream &out,
                   std::string const &trailer_comment = {});
PartialDataset read_dataset(std::istream &in);

} // namespace wsml
