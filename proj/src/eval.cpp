#include "wsml/eval.hpp"

#include <algorithm>
#include <numeric>

namespace wsml {

std::optional<Real> average_precision(Eigen::Ref<const Vector> const &scores,
                                      Eigen::Ref<const LabelVector> const &labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores[a] > scores[b]; });

  Index hits = 0;
  Real sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]]) {
      ++hits;
      sum += static_cast<Real>(hits) / static_cast<Real>(r + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<Real>(hits);
}

namespace {

ApResult finish(std::vector<std::optional<Real>> per_category) {
  ApResult r;
  Real sum = 0.0;
  Index scored = 0;
  for (std::size_t k = 0; k < per_category.size(); ++k) {
    if (per_category[k]) {
      sum += *per_category[k];
      ++scored;
    } else {
      r.skipped.push_back(static_cast<Index>(k));
    }
  }
  if (scored == 0) throw Error("no category has a positive label; mAP undefined");
  r.map = sum / static_cast<Real>(scored);
  r.per_category = std::move(per_category);
  return r;
}

} // namespace

ApResult mean_average_precision(Matrix const &scores, BinaryMatrix const &truth) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw ContractError("scores and truth differ in shape");
  }
  if (scores.rows() < 1) throw ContractError("mAP needs at least one sample");
  std::vector<std::optional<Real>> ap;
  for (Index k = 0; k < scores.cols(); ++k) ap.push_back(average_precision(scores.col(k), truth.col(k)));
  return finish(std::move(ap));
}

ApResult mean_average_precision_observed(Matrix const &scores, LabelStates const &states) {
  if (scores.rows() != states.rows() || scores.cols() != states.cols()) {
    throw ContractError("scores and states differ in shape");
  }
  std::vector<std::optional<Real>> ap;
  for (Index k = 0; k < scores.cols(); ++k) {
    std::vector<Real> s;
    std::vector<std::uint8_t> l;
    for (Index i = 0; i < scores.rows(); ++i) {
      if (!is_observed(states(i, k))) continue;
      s.push_back(scores(i, k));
      l.push_back(states(i, k) == LabelState::ObservedPositive ? 1 : 0);
    }
    auto const n = static_cast<Index>(s.size());
    ap.push_back(average_precision(Eigen::Map<const Vector>(s.data(), n),
                                   Eigen::Map<const LabelVector>(l.data(), n)));
  }
  return finish(std::move(ap));
}

std::vector<std::vector<Index>> group_categories(std::span<const Index> counts, Index groups) {
  auto const k = static_cast<Index>(counts.size());
  if (groups < 1 || groups > k) throw ConfigError("group count must lie in [1, K]");
  std::vector<Index> order(counts.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return counts[static_cast<std::size_t>(a)] < counts[static_cast<std::size_t>(b)];
  });

  std::vector<Index> sizes(static_cast<std::size_t>(groups), k / groups);
  for (Index r = 0; r < k % groups; ++r) ++sizes[static_cast<std::size_t>(groups - 1 - r)];

  std::vector<std::vector<Index>> out;
  auto it = order.begin();
  for (Index size : sizes) {
    out.emplace_back(it, it + size);
    it += size;
  }
  return out;
}

GroupedMap grouped_map(Matrix const &scores, BinaryMatrix const &truth,
                       std::span<const Index> counts, Index groups) {
  if (static_cast<Index>(counts.size()) != scores.cols()) {
    throw ContractError("one count per category required");
  }
  GroupedMap g;
  g.groups = group_categories(counts, groups);
  auto const full = mean_average_precision(scores, truth);
  for (auto const &members : g.groups) {
    Real sum = 0.0;
    Index scored = 0;
    for (Index k : members) {
      if (auto const &ap = full.per_category[static_cast<std::size_t>(k)]) {
        sum += *ap;
        ++scored;
      }
    }
    g.map.push_back(scored ? std::optional<Real>(sum / static_cast<Real>(scored)) : std::nullopt);
  }
  return g;
}

std::optional<TruthBucket> truth_bucket(LabelState state, std::uint8_t truth) {
  if (state == LabelState::ObservedPositive) return TruthBucket::TruePositive;
  if (an_target(state) != 0.0) return std::nullopt;
  return truth ? TruthBucket::FalseNegative : TruthBucket::TrueNegative;
}

PhaseDistribution phase_distribution(MemorizationTracker const &tracker, BinaryMatrix const &truth,
                                     LabelStates const &states) {
  if (tracker.rows() != truth.rows() || tracker.cols() != truth.cols() ||
      states.rows() != truth.rows() || states.cols() != truth.cols()) {
    throw ContractError("tracker, truth and states differ in shape");
  }
  if (tracker.epochs_seen() < 2) {
    throw ContractError("phase distribution needs at least two tracked epochs");
  }
  std::array<Index, 3> warmup{}, total{};
  for (Index i = 0; i < truth.rows(); ++i) {
    for (Index k = 0; k < truth.cols(); ++k) {
      int const peak = tracker.peak_epoch(i, k);
      auto const bucket = truth_bucket(states(i, k), truth(i, k));
      if (peak == 0 || !bucket) continue;
      auto const b = static_cast<std::size_t>(*bucket);
      ++total[b];
      if (peak == 1) ++warmup[b];
    }
  }
  PhaseDistribution out;
  for (std::size_t b = 0; b < 3; ++b) {
    if (total[b] == 0) continue;
    Real const w = 100.0 * static_cast<Real>(warmup[b]) / static_cast<Real>(total[b]);
    out.rows[b] = PhaseRow{total[b], w, 100.0 - w};
  }
  return out;
}

} // namespace wsml
