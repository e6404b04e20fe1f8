#include "wsml/report.hpp"

#include "text_io.hpp"

#include <cmath>
#include <ostream>

namespace wsml {

namespace {

nlohmann::json optional_real(std::optional<Real> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json nan_as_null(Real v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

constexpr std::array<char const *, 3> kBucketNames{"TP", "TN", "FN"};

} // namespace

nlohmann::json to_json(TrainConfig const &c) {
  return {
      {"epochs", c.epochs},
      {"batch", c.batch_size},
      {"seed", c.seed},
      {"optimizer", c.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
      {"lr", c.optimizer.learning_rate},
      {"output_lr_multiplier", c.optimizer.output_lr_multiplier},
      {"scheme", std::string(scheme_token(c.scheme.scheme))},
      {"delta_rel", c.scheme.delta_rel},
      {"r0", c.scheme.r0},
      {"delta_abs", c.scheme.delta_abs},
      {"eps_smooth", c.scheme.eps_smooth},
      {"carry_flag_budget", c.scheme.carry_flag_budget},
      {"arch", std::string(architecture_token(c.arch))},
      {"hidden", c.hidden},
      {"val_frac", c.val_fraction},
      {"frozen_epochs", c.frozen_epochs},
  };
}

nlohmann::json to_json(PhaseDistribution const &phases) {
  nlohmann::json warmup = nlohmann::json::object();
  nlohmann::json regular = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t b = 0; b < 3; ++b) {
    auto const &row = phases.rows[b];
    warmup[kBucketNames[b]] = row ? nlohmann::json(row->warmup_percent) : nlohmann::json(nullptr);
    regular[kBucketNames[b]] = row ? nlohmann::json(row->regular_percent) : nlohmann::json(nullptr);
    counts[kBucketNames[b]] = row ? row->labels : 0;
  }
  return {{"warmup", warmup}, {"regular", regular}, {"labels", counts}};
}

nlohmann::json to_json(ApResult const &ap) {
  nlohmann::json per = nlohmann::json::array();
  for (auto const &v : ap.per_category) per.push_back(v ? nlohmann::json(100.0 * *v) : nullptr);
  return {{"per_category_ap", per}, {"skipped", ap.skipped}, {"map", 100.0 * ap.map}};
}

nlohmann::json to_json(GroupedMap const &g) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < g.groups.size(); ++i) {
    out.push_back({{"group", i + 1},
                   {"categories", g.groups[i]},
                   {"map", g.map[i] ? nlohmann::json(100.0 * *g.map[i]) : nullptr}});
  }
  return out;
}

std::string config_comment(nlohmann::json const &resolved) {
  return "cfg " + resolved.dump();
}

void write_metrics_csv(RunReport const &report, std::ostream &out,
                       std::string const &cfg_comment) {
  if (!cfg_comment.empty()) out << '#' << cfg_comment << '\n';
  out << "epoch,train_loss,val_map,flags,flag_precision,cum_corrections,threshold_min\n";
  for (auto const &r : report.epochs) {
    out << r.epoch << ',' << detail::format_real(r.train_loss) << ','
        << detail::format_real(100.0 * r.val_map) << ',' << r.flags << ',';
    if (r.flag_precision) out << detail::format_real(*r.flag_precision);
    out << ',' << r.cumulative_corrections << ',';
    if (!std::isnan(r.threshold_min)) out << detail::format_real(r.threshold_min);
    out << '\n';
  }
}

nlohmann::json report_json(RunReport const &report, nlohmann::json const &resolved_config,
                           ReportPaths const &paths) {
  nlohmann::json epochs = nlohmann::json::array();
  for (auto const &r : report.epochs) {
    nlohmann::json e = {
        {"epoch", r.epoch},
        {"train_loss", r.train_loss},
        {"val_map", 100.0 * r.val_map},
        {"flags", r.flags},
        {"flags_positive", r.flags_positive ? nlohmann::json(*r.flags_positive) : nullptr},
        {"flag_precision", optional_real(r.flag_precision)},
        {"cum_corrections", r.cumulative_corrections},
        {"threshold_min", nan_as_null(r.threshold_min)},
    };
    if (r.bucket_losses) {
      nlohmann::json b = nlohmann::json::object();
      for (std::size_t i = 0; i < 3; ++i) b[kBucketNames[i]] = optional_real(r.bucket_losses->mean[i]);
      e["bucket_mean_loss"] = b;
    }
    epochs.push_back(std::move(e));
  }
  nlohmann::json j = {
      {"config", resolved_config},
      {"dataset_size", report.dataset_size},
      {"train_size", report.train_size},
      {"val_size", report.val_size},
      {"epochs", epochs},
      {"best_epoch", report.best_epoch},
      {"best_val_map", 100.0 * report.best_val_map},
      {"test_map", report.test_map ? nlohmann::json(100.0 * *report.test_map) : nullptr},
      {"checkpoint", paths.model},
      {"metrics", paths.metrics},
      {"tracker", paths.tracker},
  };
  j["phase_distribution"] = report.phases ? to_json(*report.phases) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json eval_json(ApResult const &ap, std::optional<GroupedMap> const &groups,
                         std::optional<PhaseDistribution> const &phases,
                         nlohmann::json const &resolved_config) {
  nlohmann::json j = to_json(ap);
  j["config"] = resolved_config;
  if (groups) j["groups"] = to_json(*groups);
  if (phases) j["phase_distribution"] = to_json(*phases);
  return j;
}

} // namespace wsml
