#pragma once

#include "dataset.hpp"
#include "tracker.hpp"
#include "types.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace wsml {

using LabelVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

/// Non-interpolated AP: mean of precision@r over the ranks r of positives,
/// ranking by descending score with ties broken by ascending index.
/// nullopt when there are no positives (the caller skips the category).
std::optional<Real> average_precision(Eigen::Ref<const Vector> const &scores,
                                      Eigen::Ref<const LabelVector> const &labels);

struct ApResult {
  std::vector<std::optional<Real>> per_category;
  std::vector<Index> skipped;
  Real map = 0.0;  // fraction in [0, 1]
};

/// Per-category AP against truth; categories without positives are skipped.
/// Throws Error if every category is skipped.
ApResult mean_average_precision(Matrix const &scores, BinaryMatrix const &truth);

/// AP over observed entries only (Unknown and corrected entries are left out of
/// each category's ranking).
ApResult mean_average_precision_observed(Matrix const &scores, LabelStates const &states);

struct GroupedMap {
  std::vector<std::vector<Index>> groups;  // category ids, ascending count order
  std::vector<std::optional<Real>> map;    // nullopt when every category in the group is skipped
};

/// Sorts categories by count (ties by id), cuts them into G contiguous groups
/// of floor(K/G), handing the remainder out one per group from the last group backward.
std::vector<std::vector<Index>> group_categories(std::span<const Index> counts, Index groups);

GroupedMap grouped_map(Matrix const &scores, BinaryMatrix const &truth,
                       std::span<const Index> counts, Index groups);

struct PhaseRow {
  Index labels = 0;
  Real warmup_percent = 0.0;   // peak loss at epoch 1
  Real regular_percent = 0.0;  // peak loss after epoch 1
};

struct PhaseDistribution {
  std::array<std::optional<PhaseRow>, 3> rows;  // indexed by TruthBucket

  std::optional<PhaseRow> const &operator[](TruthBucket b) const {
    return rows[static_cast<std::size_t>(b)];
  }
};

/// Bucket of one label, or nullopt for corrected positives (no bucket).
std::optional<TruthBucket> truth_bucket(LabelState state, std::uint8_t truth);

/// Highest-loss phase per truth bucket. states are the labels the run started from.
PhaseDistribution phase_distribution(MemorizationTracker const &tracker, BinaryMatrix const &truth,
                                     LabelStates const &states);

} // namespace wsml
