#pragma once

// Serialization of run and evaluation results: metrics CSV, report JSON,
// evaluation JSON, and the "#cfg" reproducibility line.

#include "eval.hpp"
#include "trainer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>

namespace wsml {

nlohmann::json to_json(TrainConfig const &cfg);
nlohmann::json to_json(PhaseDistribution const &phases);
nlohmann::json to_json(ApResult const &ap);
nlohmann::json to_json(GroupedMap const &g);

/// Compact single-line JSON, suitable after a "#cfg " prefix.
std::string config_comment(nlohmann::json const &resolved);

/// Header: epoch,train_loss,val_map,flags,flag_precision,cum_corrections,threshold_min.
/// val_map is in percent; absent precision and NaN thresholds are empty fields.
void write_metrics_csv(RunReport const &report, std::ostream &out,
                       std::string const &cfg_comment = {});

struct ReportPaths {
  std::string model;
  std::string metrics;
  std::string tracker;
};

/// mAP values are reported in percent.
nlohmann::json report_json(RunReport const &report, nlohmann::json const &resolved_config,
                           ReportPaths const &paths = {});

nlohmann::json eval_json(ApResult const &ap, std::optional<GroupedMap> const &groups,
                         std::optional<PhaseDistribution> const &phases,
                         nlohmann::json const &resolved_config);

} // namespace wsml
