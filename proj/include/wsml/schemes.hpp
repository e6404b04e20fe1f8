#pragma once

#include "dataset.hpp"
#include "numeric.hpp"
#include "types.hpp"

#include <compare>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace wsml {

enum class Scheme {
  NaiveAn,
  IgnoreUnobserved,
  Wan,
  Lsan,
  LlR,
  LlCt,
  LlCp,
  LlRAbs,
  LlCtAbs,
  LlCpAbs,
};

std::string_view scheme_token(Scheme s);
Scheme parse_scheme(std::string_view token); // throws ConfigError

constexpr bool is_relative(Scheme s) {
  return s == Scheme::LlR || s == Scheme::LlCt || s == Scheme::LlCp;
}
constexpr bool is_absolute(Scheme s) {
  return s == Scheme::LlRAbs || s == Scheme::LlCtAbs || s == Scheme::LlCpAbs;
}
constexpr bool is_large_loss(Scheme s) { return is_relative(s) || is_absolute(s); }
constexpr bool is_rejection(Scheme s) { return s == Scheme::LlR || s == Scheme::LlRAbs; }
constexpr bool is_permanent(Scheme s) { return s == Scheme::LlCp || s == Scheme::LlCpAbs; }

struct SchemeConfig {
  Scheme scheme = Scheme::NaiveAn;
  Real delta_rel = 0.2;   // percentage points per epoch
  Real r0 = 1.5;          // absolute variants: initial threshold
  Real delta_abs = 0.15;  // absolute variants: threshold decrement per epoch
  Real eps_smooth = 0.1;  // LSAN smoothing mass
  /// Relative schemes: carry the fractional flag count from batch to batch
  /// within an epoch instead of flooring it per batch. Off by default.
  bool carry_flag_budget = false;

  void validate() const; // throws ConfigError
};

/// Elementwise binary cross entropy. Probabilities are expected already clamped.
template <typename DerivedP, typename DerivedT>
Matrix bce_elementwise(Eigen::MatrixBase<DerivedP> const &p,
                       Eigen::MatrixBase<DerivedT> const &t) {
  if (p.rows() != t.rows() || p.cols() != t.cols()) {
    throw ContractError("bce_elementwise: shape mismatch");
  }
  return (-(t.array() * p.array().log()) - (1.0 - t.array()) * (1.0 - p.array()).log())
      .matrix();
}

/// Weight that turns an Assume-Negative loss -log(1-p) into -log(p).
inline Real correction_weight(Real p) { return std::log(p) / std::log1p(-p); }

/// Large-loss rate in percent for epoch t >= 1, or nullopt for the absolute
/// variants, which use absolute_threshold instead.
std::optional<Real> rejection_rate(SchemeConfig const &cfg, int epoch);

/// R0 - t * delta_abs.
Real absolute_threshold(SchemeConfig const &cfg, int epoch);

/// Position of a label inside a batch (or dataset). Ordered lexicographically.
struct LabelIndex {
  Index sample = 0;
  Index category = 0;
  friend auto operator<=>(LabelIndex const &, LabelIndex const &) = default;
};

struct Selection {
  std::vector<LabelIndex> flags;  // ascending (sample, category)
  Real threshold = std::numeric_limits<Real>::quiet_NaN();
};

/// Flags exactly floor(rate/100 * M) Unknown entries with the largest losses,
/// M = number of Unknown entries. Ties go to the smaller (sample, category).
/// threshold = smallest flagged loss, NaN if none flagged.
Selection select_by_rate(Matrix const &losses, LabelStates const &states, Real rate_percent);

/// The k largest-loss Unknown entries (ties to the smaller index), k <= M.
Selection select_top_k(Matrix const &losses, LabelStates const &states, Index k);

/// Flags every Unknown entry whose loss is strictly greater than threshold.
Selection select_by_threshold(Matrix const &losses, LabelStates const &states, Real threshold);

struct BatchDecision {
  Matrix targets;    // effective targets passed to backward
  Matrix weights;    // lambda
  Matrix an_losses;  // per-element BCE against the Assume-Negative targets
  std::vector<LabelIndex> flags;
  Real threshold = std::numeric_limits<Real>::quiet_NaN();
};

/// Running totals for carry_flag_budget; reset at the start of each epoch.
struct FlagBudget {
  Index unknown_seen = 0;
  Index flagged = 0;
};

/// Per-batch targets and weights for the configured scheme. states holds the
/// batch rows only; flags index into the batch. budget is used only when
/// cfg.carry_flag_budget is set.
BatchDecision decide_batch(SchemeConfig const &cfg, Matrix const &probs,
                           LabelStates const &states, int epoch, FlagBudget *budget = nullptr);

/// Throws ContractError if a decision violates the observed-label rules:
/// flags only on Unknown entries, observed entries keep weight 1 and their
/// scheme-defined target.
void check_decision(SchemeConfig const &cfg, BatchDecision const &d, LabelStates const &states);

/// Unknown -> CorrectedPositive for each flag. Returns the number corrected.
/// A flag on any other state is a ContractError.
std::size_t apply_permanent_corrections(LabelStates &states, std::span<const LabelIndex> flags);

} // namespace wsml
