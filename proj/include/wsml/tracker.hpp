#pragma once

#include "types.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace wsml {

/// Running per-label maximum training loss and the epoch it occurred in.
class MemorizationTracker {
 public:
  MemorizationTracker() = default;
  MemorizationTracker(Index samples, Index classes);

  Index rows() const noexcept { return max_loss_.rows(); }
  Index cols() const noexcept { return max_loss_.cols(); }

  /// Strictly larger losses replace the running max, so the earliest epoch wins ties.
  void observe(Index sample, Index category, Real loss, int epoch);

  Real max_loss(Index sample, Index category) const { return max_loss_(sample, category); }
  /// 0 when the label was never observed.
  int peak_epoch(Index sample, Index category) const { return peak_epoch_(sample, category); }

  Matrix const &max_losses() const noexcept { return max_loss_; }
  Eigen::MatrixXi const &peak_epochs() const noexcept { return peak_epoch_; }

  /// Last epoch passed to observe().
  int epochs_seen() const noexcept { return epochs_seen_; }

  /// Build from stored values (dump files).
  static MemorizationTracker from_values(Matrix max_loss, Eigen::MatrixXi peak_epoch);

 private:
  Matrix max_loss_;
  Eigen::MatrixXi peak_epoch_;
  int epochs_seen_ = 0;
};

enum class TruthBucket { TruePositive, TrueNegative, FalseNegative };

/// Mean training loss per truth bucket for one epoch; absent when the bucket is empty.
struct BucketLosses {
  std::array<std::optional<Real>, 3> mean;  // indexed by TruthBucket
};

void write_tracker(MemorizationTracker const &t, std::ostream &out,
                   std::vector<Index> const &row_ids, std::string const &header_comment = {});
/// Rows come back in dump order with their original ids.
MemorizationTracker read_tracker(std::istream &in, std::vector<Index> &row_ids);

void save_tracker(MemorizationTracker const &t, std::filesystem::path const &path,
                  std::vector<Index> const &row_ids, std::string const &header_comment = {});
MemorizationTracker load_tracker(std::filesystem::path const &path, std::vector<Index> &row_ids);

} // namespace wsml
