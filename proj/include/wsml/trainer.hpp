#pragma once

#include "dataset.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "random.hpp"
#include "schemes.hpp"
#include "tracker.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace wsml {

struct TrainConfig {
  int epochs = 30;
  Index batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  SchemeConfig scheme;
  Architecture arch = Architecture::Mlp1;
  Index hidden = 64;
  Real val_fraction = 0.2;
  /// Epochs with the hidden layer frozen before end-to-end training (0 = end-to-end).
  int frozen_epochs = 0;
  /// Re-check the observed-label rules on every batch.
  bool debug_checks = false;

  void validate() const; // throws ConfigError
};

struct SplitIndices {
  std::vector<Index> train;  // ascending
  std::vector<Index> val;    // ascending
};

/// Uniform sample-level split with floor(val_fraction * n) validation rows.
SplitIndices split_indices(Index n, Real val_fraction, std::uint64_t seed);

struct EpochStats {
  Real mean_loss = 0.0;        // sample-weighted mean of the per-batch training loss
  Matrix label_losses;         // Assume-Negative loss of every label at the batch that visited it
  std::vector<LabelIndex> flags;  // dataset-row indices, in batch order
  Index corrections = 0;
  Real threshold_min = std::numeric_limits<Real>::quiet_NaN();
};

/// One pass over the data in a shuffled order. Only features and labels are
/// read; under permanent-correction schemes states is updated in place.
EpochStats train_epoch(Classifier &model, OptimizerState &opt, Matrix const &features,
                       LabelStates &states, SchemeConfig const &scheme, int epoch,
                       Index batch_size, Rng &rng, MemorizationTracker *tracker = nullptr,
                       bool debug_checks = false);

struct FlagTally {
  Index flagged = 0;
  Index flagged_positive = 0;
};

/// Per-epoch share of flagged labels whose truth is positive. With cumulative
/// set the ratio runs over all epochs so far. nullopt when nothing was flagged.
std::vector<std::optional<Real>> modification_precision(std::span<const FlagTally> per_epoch,
                                                        bool cumulative);

struct EpochRecord {
  int epoch = 0;
  Real train_loss = 0.0;
  Real val_map = 0.0;  // fraction
  Index flags = 0;
  std::optional<Index> flags_positive;
  std::optional<Real> flag_precision;
  Index cumulative_corrections = 0;
  Real threshold_min = std::numeric_limits<Real>::quiet_NaN();
  std::optional<BucketLosses> bucket_losses;
};

struct RunReport {
  TrainConfig config;
  Index dataset_size = 0;
  Index train_size = 0;
  Index val_size = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  Real best_val_map = 0.0;
  Classifier best_model;
  std::optional<Real> test_map;
  std::vector<Index> train_rows;  // dataset rows used for training, tracker row order
  MemorizationTracker tracker;
  std::optional<PhaseDistribution> phases;
};

struct RunHooks {
  /// Called after each epoch with the training split's current label states.
  std::function<void(int epoch, EpochStats const &, LabelStates const &)> on_epoch;
};

/// Full run: split, train, validate every epoch, keep the best model by
/// validation mAP (earliest epoch on ties), score it on test when given.
RunReport run(TrainConfig const &config, PartialDataset const &ds,
              PartialDataset const *test = nullptr, RunHooks const &hooks = {});

} // namespace wsml
