#include "wsml/schemes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

namespace wsml {

namespace {

constexpr std::array<std::pair<Scheme, std::string_view>, 10> kTokens{{
    {Scheme::NaiveAn, "naive-an"},
    {Scheme::IgnoreUnobserved, "ignore-unobserved"},
    {Scheme::Wan, "wan"},
    {Scheme::Lsan, "lsan"},
    {Scheme::LlR, "ll-r"},
    {Scheme::LlCt, "ll-ct"},
    {Scheme::LlCp, "ll-cp"},
    {Scheme::LlRAbs, "ll-r-abs"},
    {Scheme::LlCtAbs, "ll-ct-abs"},
    {Scheme::LlCpAbs, "ll-cp-abs"},
}};

} // namespace

std::string_view scheme_token(Scheme s) {
  for (auto const &[scheme, token] : kTokens)
    if (scheme == s) return token;
  return "?";
}

Scheme parse_scheme(std::string_view token) {
  for (auto const &[scheme, name] : kTokens)
    if (name == token) return scheme;
  throw ConfigError("unknown scheme '" + std::string(token) + "'");
}

void SchemeConfig::validate() const {
  if (is_relative(scheme) && !(delta_rel >= 0.0 && std::isfinite(delta_rel))) {
    throw ConfigError("delta-rel must be a finite non-negative number");
  }
  if (is_absolute(scheme)) {
    if (!(r0 > 0.0) || !std::isfinite(r0)) throw ConfigError("r0 must be positive");
    if (!(delta_abs >= 0.0) || !std::isfinite(delta_abs)) {
      throw ConfigError("delta-abs must be non-negative");
    }
  }
  if (!(eps_smooth >= 0.0 && eps_smooth < 0.5)) {
    throw ConfigError("eps-smooth must lie in [0, 0.5)");
  }
}

std::optional<Real> rejection_rate(SchemeConfig const &cfg, int epoch) {
  if (epoch < 1) throw ContractError("epochs are numbered from 1");
  if (is_absolute(cfg.scheme)) return std::nullopt;
  Real rate = 0.0;
  switch (cfg.scheme) {
    case Scheme::LlR:
    case Scheme::LlCt: rate = static_cast<Real>(epoch - 1) * cfg.delta_rel; break;
    case Scheme::LlCp: rate = epoch == 1 ? 0.0 : cfg.delta_rel; break;
    default: break;
  }
  return std::clamp(rate, 0.0, 100.0);
}

Real absolute_threshold(SchemeConfig const &cfg, int epoch) {
  return cfg.r0 - static_cast<Real>(epoch) * cfg.delta_abs;
}

// ---------------------------------------------------------------------------
// Selection

namespace {

struct Candidate {
  Real loss;
  LabelIndex at;
};

std::vector<Candidate> unknown_candidates(Matrix const &losses, LabelStates const &states) {
  if (losses.rows() != states.rows() || losses.cols() != states.cols()) {
    throw ContractError("losses and states differ in shape");
  }
  std::vector<Candidate> out;
  for (Index i = 0; i < states.rows(); ++i)
    for (Index k = 0; k < states.cols(); ++k)
      if (states(i, k) == LabelState::Unknown) out.push_back({losses(i, k), {i, k}});
  return out;
}

} // namespace

Selection select_top_k(Matrix const &losses, LabelStates const &states, Index k) {
  auto candidates = unknown_candidates(losses, states);
  k = std::clamp<Index>(k, 0, static_cast<Index>(candidates.size()));
  Selection sel;
  if (k == 0) return sel;
  auto const larger = [](Candidate const &a, Candidate const &b) {
    if (a.loss != b.loss) return a.loss > b.loss;
    return a.at < b.at;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), larger);
  sel.threshold = candidates[static_cast<std::size_t>(k - 1)].loss;
  sel.flags.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) sel.flags.push_back(candidates[static_cast<std::size_t>(i)].at);
  std::sort(sel.flags.begin(), sel.flags.end());
  return sel;
}

Selection select_by_rate(Matrix const &losses, LabelStates const &states, Real rate_percent) {
  if (!(rate_percent >= 0.0 && rate_percent <= 100.0)) {
    throw ContractError("rate must lie in [0, 100]");
  }
  if (losses.rows() != states.rows() || losses.cols() != states.cols()) {
    throw ContractError("losses and states differ in shape");
  }
  return select_top_k(losses, states,
                      floor_count(rate_percent / 100.0, states.count(LabelState::Unknown)));
}

Selection select_by_threshold(Matrix const &losses, LabelStates const &states, Real threshold) {
  Selection sel;
  sel.threshold = threshold;
  for (auto const &c : unknown_candidates(losses, states))
    if (c.loss > threshold) sel.flags.push_back(c.at);
  return sel;
}

// ---------------------------------------------------------------------------
// Per-batch decisions

BatchDecision decide_batch(SchemeConfig const &cfg, Matrix const &probs,
                           LabelStates const &states, int epoch, FlagBudget *budget) {
  if (probs.rows() != states.rows() || probs.cols() != states.cols()) {
    throw ContractError("probabilities and states differ in shape");
  }
  BatchDecision d;
  Matrix const an = an_targets(states);
  d.an_losses = bce_elementwise(probs, an);
  d.targets = an;
  d.weights = Matrix::Ones(probs.rows(), probs.cols());
  Real const num_classes = static_cast<Real>(probs.cols());

  switch (cfg.scheme) {
    case Scheme::NaiveAn: break;
    case Scheme::IgnoreUnobserved:
      for (Index i = 0; i < states.rows(); ++i)
        for (Index k = 0; k < states.cols(); ++k)
          if (states(i, k) == LabelState::Unknown) d.weights(i, k) = 0.0;
      break;
    case Scheme::Wan:
      d.weights = (an.array() == 0.0).select(1.0 / (num_classes - 1.0), d.weights);
      break;
    case Scheme::Lsan:
      d.targets = (an.array() * (1.0 - cfg.eps_smooth) + (1.0 - an.array()) * cfg.eps_smooth)
                      .matrix();
      break;
    default: {
      auto const rate = rejection_rate(cfg, epoch);
      Selection sel;
      if (!rate) {
        sel = select_by_threshold(d.an_losses, states, absolute_threshold(cfg, epoch));
      } else if (cfg.carry_flag_budget && budget) {
        budget->unknown_seen += states.count(LabelState::Unknown);
        Index const owed = floor_count(*rate / 100.0, budget->unknown_seen) - budget->flagged;
        sel = select_top_k(d.an_losses, states, owed);
        budget->flagged += static_cast<Index>(sel.flags.size());
      } else {
        sel = select_by_rate(d.an_losses, states, *rate);
      }
      for (auto const &f : sel.flags) {
        if (is_rejection(cfg.scheme)) d.weights(f.sample, f.category) = 0.0;
        else d.targets(f.sample, f.category) = 1.0;
      }
      d.flags = std::move(sel.flags);
      d.threshold = sel.threshold;
      break;
    }
  }
  return d;
}

void check_decision(SchemeConfig const &cfg, BatchDecision const &d, LabelStates const &states) {
  for (auto const &f : d.flags) {
    if (states(f.sample, f.category) != LabelState::Unknown) {
      throw ContractError("flag on a non-Unknown label at (" + std::to_string(f.sample) + ", " +
                          std::to_string(f.category) + ")");
    }
  }
  Real const wan_weight = 1.0 / static_cast<Real>(states.cols() - 1);
  for (Index i = 0; i < states.rows(); ++i) {
    for (Index k = 0; k < states.cols(); ++k) {
      auto const s = states(i, k);
      if (!is_observed(s)) continue;
      Real want_target = an_target(s);
      if (cfg.scheme == Scheme::Lsan) {
        want_target = want_target * (1.0 - cfg.eps_smooth) + (1.0 - want_target) * cfg.eps_smooth;
      }
      Real const want_weight =
          (cfg.scheme == Scheme::Wan && s == LabelState::ObservedNegative) ? wan_weight : 1.0;
      if (d.targets(i, k) != want_target || d.weights(i, k) != want_weight) {
        throw ContractError("observed label modified at (" + std::to_string(i) + ", " +
                            std::to_string(k) + ")");
      }
    }
  }
}

std::size_t apply_permanent_corrections(LabelStates &states, std::span<const LabelIndex> flags) {
  std::set<LabelIndex> seen;
  for (auto const &f : flags) {
    if (f.sample < 0 || f.sample >= states.rows() || f.category < 0 ||
        f.category >= states.cols()) {
      throw ContractError("correction index out of range");
    }
    if (states(f.sample, f.category) != LabelState::Unknown || !seen.insert(f).second) {
      throw ContractError("correction requested for a non-Unknown label at (" +
                          std::to_string(f.sample) + ", " + std::to_string(f.category) + ")");
    }
  }
  for (auto const &f : flags) states.transition(f.sample, f.category, LabelState::CorrectedPositive);
  return flags.size();
}

} // namespace wsml
