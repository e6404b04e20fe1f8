#include "wsml/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace wsml {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (frozen_epochs < 0) throw ConfigError("frozen epochs must be non-negative");
  if (arch == Architecture::Mlp1 && hidden < 1) throw ConfigError("hidden units must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  scheme.validate();
}

SplitIndices split_indices(Index n, Real val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  Index const n_val = floor_count(val_fraction, n);
  if (n_val == 0 || n_val == n) {
    throw ConfigError("split of " + std::to_string(n) + " samples leaves an empty side");
  }
  auto rng = make_rng(seed, Stream::Split);
  SplitIndices s;
  s.val = random_subset(n, n_val, rng);
  s.train.reserve(static_cast<std::size_t>(n - n_val));
  auto v = s.val.begin();
  for (Index i = 0; i < n; ++i) {
    if (v != s.val.end() && *v == i) ++v;
    else s.train.push_back(i);
  }
  return s;
}

EpochStats train_epoch(Classifier &model, OptimizerState &opt, Matrix const &features,
                       LabelStates &states, SchemeConfig const &scheme, int epoch,
                       Index batch_size, Rng &rng, MemorizationTracker *tracker,
                       bool debug_checks) {
  if (epoch < 1) throw ContractError("epochs are numbered from 1");
  auto const n = features.rows();
  auto const k = states.cols();
  auto const order = random_permutation(n, rng);

  EpochStats stats;
  stats.label_losses = Matrix::Zero(n, k);
  Real loss_sum = 0.0;
  std::vector<LabelIndex> global_flags;
  FlagBudget budget;
  for (Index start = 0; start < n; start += batch_size) {
    Index const len = std::min(batch_size, n - start);
    std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(len));
    Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>> idx(rows.data(), len);

    Matrix const x = features(idx, Eigen::all);
    LabelStates const batch_states = states.select_rows(rows);
    Matrix const probs = forward(model, x);
    BatchDecision const d = decide_batch(scheme, probs, batch_states, epoch, &budget);
    if (debug_checks) check_decision(scheme, d, batch_states);

    for (Index i = 0; i < len; ++i) {
      auto const row = rows[static_cast<std::size_t>(i)];
      stats.label_losses.row(row) = d.an_losses.row(i);
      if (tracker)
        for (Index c = 0; c < k; ++c) tracker->observe(row, c, d.an_losses(i, c), epoch);
    }

    global_flags.clear();
    for (auto const &f : d.flags) global_flags.push_back({rows[static_cast<std::size_t>(f.sample)], f.category});
    stats.flags.insert(stats.flags.end(), global_flags.begin(), global_flags.end());
    if (!std::isnan(d.threshold)) {
      stats.threshold_min = std::isnan(stats.threshold_min)
                                ? d.threshold
                                : std::min(stats.threshold_min, d.threshold);
    }
    if (is_permanent(scheme.scheme)) {
      stats.corrections += static_cast<Index>(apply_permanent_corrections(states, global_flags));
    }

    Real const batch_loss = (d.weights.array() * bce_elementwise(probs, d.targets).array()).sum() /
                            static_cast<Real>(len * k);
    if (!std::isfinite(batch_loss)) throw DivergenceError(epoch);
    loss_sum += batch_loss * static_cast<Real>(len);

    step(model, backward(model, x, d.targets, d.weights), opt);
  }
  stats.mean_loss = loss_sum / static_cast<Real>(n);
  return stats;
}

std::vector<std::optional<Real>> modification_precision(std::span<const FlagTally> per_epoch,
                                                        bool cumulative) {
  std::vector<std::optional<Real>> out;
  FlagTally running;
  for (auto const &t : per_epoch) {
    FlagTally const &use = cumulative ? running : t;
    if (cumulative) {
      running.flagged += t.flagged;
      running.flagged_positive += t.flagged_positive;
    }
    if (use.flagged == 0) out.emplace_back();
    else out.emplace_back(static_cast<Real>(use.flagged_positive) / static_cast<Real>(use.flagged));
  }
  return out;
}

namespace {

Real validation_map(Classifier const &model, PartialDataset const &val) {
  Matrix const scores = forward(model, val.features());
  return val.has_truth() ? mean_average_precision(scores, val.truth()).map
                         : mean_average_precision_observed(scores, val.states()).map;
}

BucketLosses bucket_means(Matrix const &losses, LabelStates const &initial, BinaryMatrix const &truth) {
  std::array<Real, 3> sum{};
  std::array<Index, 3> count{};
  for (Index i = 0; i < losses.rows(); ++i) {
    for (Index k = 0; k < losses.cols(); ++k) {
      if (auto b = truth_bucket(initial(i, k), truth(i, k))) {
        sum[static_cast<std::size_t>(*b)] += losses(i, k);
        ++count[static_cast<std::size_t>(*b)];
      }
    }
  }
  BucketLosses out;
  for (std::size_t b = 0; b < 3; ++b)
    if (count[b]) out.mean[b] = sum[b] / static_cast<Real>(count[b]);
  return out;
}

} // namespace

RunReport run(TrainConfig const &config, PartialDataset const &ds, PartialDataset const *test,
              RunHooks const &hooks) {
  config.validate();
  if (ds.size() < 2) throw ConfigError("training needs at least two samples");

  RunReport report;
  report.config = config;
  report.dataset_size = ds.size();
  auto const split = split_indices(ds.size(), config.val_fraction, config.seed);
  PartialDataset const val = ds.select_rows(split.val);
  // The training path below only ever sees these two values; truth stays in ds.
  Matrix const train_features = ds.features()(
      Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(
          split.train.data(), static_cast<Index>(split.train.size())),
      Eigen::all);
  LabelStates train_states = ds.states().select_rows(split.train);
  LabelStates const initial_states = train_states;
  std::optional<BinaryMatrix> train_truth;
  if (ds.has_truth()) train_truth = ds.select_rows(split.train).truth();

  report.train_size = train_features.rows();
  report.val_size = val.size();
  report.train_rows = split.train;

  Classifier model =
      init_classifier(config.arch, ds.dim(), ds.num_classes(), config.hidden, config.seed);
  OptimizerState opt = init_optimizer(config.optimizer, model);
  auto shuffle_rng = make_rng(config.seed, Stream::Shuffle);
  report.tracker = MemorizationTracker(report.train_size, ds.num_classes());

  std::vector<FlagTally> tallies;
  Index cumulative = 0;
  bool const permanent = is_permanent(config.scheme.scheme);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    model.frozen_hidden = config.arch == Architecture::Mlp1 && epoch <= config.frozen_epochs;
    EpochStats const stats =
        train_epoch(model, opt, train_features, train_states, config.scheme, epoch,
                    config.batch_size, shuffle_rng, &report.tracker, config.debug_checks);
    if (hooks.on_epoch) hooks.on_epoch(epoch, stats, train_states);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss;
    rec.val_map = validation_map(model, val);
    rec.flags = static_cast<Index>(stats.flags.size());
    cumulative += stats.corrections;
    rec.cumulative_corrections = cumulative;
    rec.threshold_min = stats.threshold_min;

    if (train_truth) {
      FlagTally t{rec.flags, 0};
      for (auto const &f : stats.flags) t.flagged_positive += (*train_truth)(f.sample, f.category);
      rec.flags_positive = t.flagged_positive;
      tallies.push_back(t);
      rec.flag_precision = modification_precision(tallies, permanent).back();
      rec.bucket_losses = bucket_means(stats.label_losses, initial_states, *train_truth);
    }

    if (epoch == 1 || rec.val_map > report.best_val_map) {
      report.best_epoch = epoch;
      report.best_val_map = rec.val_map;
      report.best_model = model;
    }
    report.epochs.push_back(rec);
  }
  report.best_model.frozen_hidden = false;

  if (test) {
    Matrix const scores = forward(report.best_model, test->features());
    report.test_map = test->has_truth()
                          ? mean_average_precision(scores, test->truth()).map
                          : mean_average_precision_observed(scores, test->states()).map;
  }
  if (train_truth && config.epochs >= 2) {
    report.phases = phase_distribution(report.tracker, *train_truth, initial_states);
  }
  return report;
}

} // namespace wsml
