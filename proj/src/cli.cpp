#include "wsml/cli.hpp"

#include "wsml/dataset.hpp"
#include "wsml/report.hpp"
#include "wsml/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <thread>

namespace wsml::cli {

namespace {

// Bad flag values discovered after parsing; mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shortest(Real v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::ofstream open_out(std::string const &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------
// gen

struct GenFlags {
  Index n = 0, dim = 0, classes = 0;
  Real pos_rate = 0.0;
  Real temperature = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  Index test_n = 0;
  std::string test_out;
};

void add_gen(CLI::App &app, GenFlags &f) {
  app.add_option("--n", f.n, "Number of samples")->required();
  app.add_option("--dim", f.dim, "Feature dimension")->required();
  app.add_option("--classes", f.classes, "Number of categories")->required();
  app.add_option("--pos-rate", f.pos_rate, "Target positive-label rate")->required();
  app.add_option("--seed", f.seed, "Random seed")->required();
  app.add_option("--out", f.out, "Output dataset file")->required();
  app.add_option("--temperature", f.temperature, "Logit temperature of the hidden model");
  app.add_option("--test-n", f.test_n, "Extra samples from the same hidden model for a test file");
  app.add_option("--test-out", f.test_out, "Test dataset file (with --test-n)");
}

int cmd_gen(GenFlags const &f) {
  if ((f.test_n > 0) != !f.test_out.empty()) {
    throw UsageError("--test-n and --test-out must be given together");
  }
  if (f.test_n < 0) throw UsageError("--test-n must be non-negative");
  SyntheticSpec spec{f.n + f.test_n, f.dim, f.classes, f.pos_rate, f.temperature, f.seed};
  if (f.n < 1) throw UsageError("--n must be at least 1");
  try {
    spec.validate();
  } catch (ConfigError const &e) {
    throw UsageError(e.what());
  }
  nlohmann::json cfg = {{"command", "gen"},        {"n", f.n},
                        {"dim", f.dim},            {"classes", f.classes},
                        {"pos_rate", f.pos_rate},  {"temperature", f.temperature},
                        {"seed", f.seed},          {"test_n", f.test_n}};
  auto const all = generate_synthetic(spec);
  std::vector<Index> train(static_cast<std::size_t>(f.n)), test(static_cast<std::size_t>(f.test_n));
  std::iota(train.begin(), train.end(), Index{0});
  std::iota(test.begin(), test.end(), f.n);
  save_dataset(f.test_n ? all.select_rows(train) : all, f.out, config_comment(cfg));
  if (f.test_n) {
    cfg["split"] = "test";
    save_dataset(all.select_rows(test), f.test_out, config_comment(cfg));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// partialize

struct PartializeFlags {
  std::string in, mode, out;
  std::optional<Real> fraction;
  std::uint64_t seed = 0;
};

void add_partialize(CLI::App &app, PartializeFlags &f) {
  app.add_option("--in", f.in, "Fully observed input dataset")->required();
  app.add_option("--mode", f.mode, "single-positive | fraction")
      ->required()
      ->check(CLI::IsMember({"single-positive", "fraction"}));
  app.add_option("--fraction", f.fraction, "Observed fraction for --mode fraction");
  app.add_option("--seed", f.seed, "Random seed")->required();
  app.add_option("--out", f.out, "Output dataset file")->required();
}

int cmd_partialize(PartializeFlags const &f) {
  if (f.mode == "fraction" && !f.fraction) throw UsageError("--mode fraction needs --fraction");
  if (f.fraction && !(*f.fraction > 0.0 && *f.fraction <= 1.0)) {
    throw UsageError("--fraction must lie in (0, 1]");
  }
  auto const full = load_dataset(f.in);
  if (!full.has_truth()) {
    throw Error("'" + f.in + "' has no TRUTH section; cannot locate positives to partialize");
  }
  nlohmann::json cfg = {{"command", "partialize"}, {"in", f.in}, {"mode", f.mode}, {"seed", f.seed}};
  PartialDataset out;
  if (f.mode == "single-positive") {
    out = make_single_positive(full, f.seed);
  } else {
    cfg["fraction"] = *f.fraction;
    out = make_fraction_observed(full, *f.fraction, f.seed);
  }
  save_dataset(out, f.out, config_comment(cfg));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / sweep

struct TrainFlags {
  std::string data, scheme, out_prefix, test, arch = "mlp1", optimizer = "adam";
  int epochs = 30;
  Index batch = 16;
  Real lr = 1e-3;
  Real output_lr_mult = 1.0;
  std::uint64_t seed = 0;
  Real delta_rel = 0.2, r0 = 1.5, delta_abs = 0.15, eps_smooth = 0.1;
  Index hidden = 64;
  int frozen_epochs = 0;
  Real val_frac = 0.2;
  Real subsample = 1.0;
  bool carry = false;
  bool debug_checks = false;
};

void add_train(CLI::App &app, TrainFlags &f) {
  app.add_option("--data", f.data, "Training dataset file")->required();
  app.add_option("--scheme", f.scheme,
                 "naive-an | ignore-unobserved | wan | lsan | ll-r | ll-ct | ll-cp | "
                 "ll-r-abs | ll-ct-abs | ll-cp-abs")
      ->required();
  app.add_option("--out-prefix", f.out_prefix, "Prefix for output files")->required();
  app.add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch", f.batch, "Mini-batch size")->capture_default_str();
  app.add_option("--lr", f.lr, "Learning rate")->capture_default_str();
  app.add_option("--seed", f.seed, "Seed for split, init and shuffling")->capture_default_str();
  app.add_option("--delta-rel", f.delta_rel, "Rate increment per epoch, percentage points")
      ->capture_default_str();
  app.add_option("--r0", f.r0, "Initial absolute threshold")->capture_default_str();
  app.add_option("--delta-abs", f.delta_abs, "Absolute threshold decrement per epoch")
      ->capture_default_str();
  app.add_option("--eps-smooth", f.eps_smooth, "Label-smoothing mass (lsan)")
      ->capture_default_str();
  app.add_option("--arch", f.arch, "linear | mlp1")
      ->check(CLI::IsMember({"linear", "mlp1"}))
      ->capture_default_str();
  app.add_option("--hidden", f.hidden, "Hidden units (mlp1)")->capture_default_str();
  app.add_option("--frozen-epochs", f.frozen_epochs, "Epochs with the hidden layer frozen")
      ->capture_default_str();
  app.add_option("--val-frac", f.val_frac, "Validation fraction")->capture_default_str();
  app.add_option("--subsample", f.subsample, "Fraction of training samples to keep")
      ->capture_default_str();
  app.add_option("--test", f.test, "Test dataset scored with the best-validation model");
  app.add_option("--optimizer", f.optimizer, "adam | sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  app.add_option("--output-lr-mult", f.output_lr_mult, "Output-layer learning-rate multiplier")
      ->capture_default_str();
  app.add_flag("--carry-flag-budget", f.carry,
               "Carry fractional flag counts across batches (relative schemes)");
  app.add_flag("--debug-checks", f.debug_checks, "Verify observed-label rules on every batch");
}

TrainConfig resolve(TrainFlags const &f, CLI::App const &app) {
  TrainConfig c;
  c.epochs = f.epochs;
  c.batch_size = f.batch;
  c.seed = f.seed;
  c.optimizer.kind = f.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  c.optimizer.learning_rate = f.lr;
  c.optimizer.output_lr_multiplier = f.output_lr_mult;
  c.arch = parse_architecture(f.arch);
  c.hidden = f.hidden;
  c.val_fraction = f.val_frac;
  c.frozen_epochs = f.frozen_epochs;
  c.debug_checks = f.debug_checks;
  c.scheme.scheme = parse_scheme(f.scheme);
  c.scheme.delta_rel = f.delta_rel;
  c.scheme.r0 = f.r0;
  c.scheme.delta_abs = f.delta_abs;
  c.scheme.eps_smooth = f.eps_smooth;
  c.scheme.carry_flag_budget = f.carry;

  auto const s = c.scheme.scheme;
  auto warn_unused = [&](char const *flag, bool used) {
    if (app.count(flag) > 0 && !used) {
      std::cerr << "warning: " << flag << " has no effect with --scheme " << f.scheme
                << "; ignored\n";
    }
  };
  warn_unused("--delta-rel", is_relative(s));
  warn_unused("--r0", is_absolute(s));
  warn_unused("--delta-abs", is_absolute(s));
  warn_unused("--eps-smooth", s == Scheme::Lsan);
  warn_unused("--carry-flag-budget", is_relative(s));
  if (!(f.subsample > 0.0 && f.subsample <= 1.0)) {
    throw ConfigError("--subsample must lie in (0, 1]");
  }
  c.validate();
  return c;
}

struct TrainData {
  PartialDataset data;
  std::vector<Index> rows;  // rows of the input file kept by --subsample
  std::optional<PartialDataset> test;
};

TrainData load_train_data(TrainFlags const &f, Real subsample_fraction, std::uint64_t seed) {
  TrainData td;
  auto const full = load_dataset(f.data);
  td.rows = subsample_rows(full.size(), subsample_fraction, seed);
  td.data = full.select_rows(td.rows);
  if (!f.test.empty()) td.test = load_dataset(f.test);
  return td;
}

nlohmann::json resolved_json(TrainConfig const &c, TrainFlags const &f, Real subsample_fraction,
                             Index effective_n) {
  auto j = to_json(c);
  j["data"] = f.data;
  j["test"] = f.test;
  j["subsample"] = subsample_fraction;
  j["effective_n"] = effective_n;
  return j;
}

int cmd_train(TrainFlags const &f, CLI::App const &app) {
  TrainConfig const cfg = resolve(f, app);
  auto const td = load_train_data(f, f.subsample, cfg.seed);
  auto const report = run(cfg, td.data, td.test ? &*td.test : nullptr);

  auto resolved = resolved_json(cfg, f, f.subsample, td.data.size());
  resolved["command"] = "train";
  std::string const comment = config_comment(resolved);
  ReportPaths const paths{f.out_prefix + ".model", f.out_prefix + ".metrics.csv",
                          f.out_prefix + ".tracker.csv"};

  {
    auto out = open_out(paths.metrics);
    write_metrics_csv(report, out, comment);
  }
  save_model(report.best_model, paths.model, comment);
  std::vector<Index> tracker_ids;
  for (Index r : report.train_rows) tracker_ids.push_back(td.rows[static_cast<std::size_t>(r)]);
  save_tracker(report.tracker, paths.tracker, tracker_ids, comment);
  {
    auto out = open_out(f.out_prefix + ".report.json");
    out << report_json(report, resolved, paths).dump(2) << '\n';
  }
  std::cout << "best epoch " << report.best_epoch << ", val mAP "
            << shortest(100.0 * report.best_val_map);
  if (report.test_map) std::cout << ", test mAP " << shortest(100.0 * *report.test_map);
  std::cout << '\n';
  return kExitOk;
}

struct SweepFlags {
  std::string param, values;
};

std::vector<Real> parse_values(std::string const &text) {
  std::vector<Real> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto const comma = std::min(text.find(',', pos), text.size());
    std::string const tok = text.substr(pos, comma - pos);
    Real v{};
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size()) {
      throw UsageError("malformed sweep value '" + tok + "'");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  if (out.empty()) throw UsageError("--values is empty");
  std::map<Real, int> seen;
  for (Real v : out) ++seen[v];
  std::string dups;
  for (auto const &[v, n] : seen)
    if (n > 1) dups += (dups.empty() ? "" : ", ") + shortest(v);
  if (!dups.empty()) throw UsageError("duplicate sweep values: " + dups);
  std::sort(out.begin(), out.end());
  return out;
}

unsigned sweep_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (char const *env = std::getenv("WSML_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return n;
}

int cmd_sweep(TrainFlags const &f, SweepFlags const &s, CLI::App const &app) {
  if (s.values.empty()) throw UsageError("--values is empty");
  auto const values = parse_values(s.values);
  TrainConfig const base = resolve(f, app);
  bool const by_subsample = s.param == "subsample";
  if (!by_subsample && !is_relative(base.scheme.scheme)) {
    std::cerr << "warning: sweeping delta-rel with --scheme " << f.scheme << " has no effect\n";
  }
  for (Real v : values) {
    if (by_subsample && !(v > 0.0 && v <= 1.0)) throw UsageError("subsample values must lie in (0, 1]");
    if (!by_subsample && !(v >= 0.0)) throw UsageError("delta-rel values must be non-negative");
  }

  auto const full = load_dataset(f.data);
  std::optional<PartialDataset> test;
  if (!f.test.empty()) test = load_dataset(f.test);

  struct Row {
    RunReport report;
    Index effective_n = 0;
  };
  std::vector<Row> rows(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < values.size();) {
      try {
        TrainConfig cfg = base;
        cfg.seed = base.seed + i;
        Real const frac = by_subsample ? values[i] : f.subsample;
        if (!by_subsample) cfg.scheme.delta_rel = values[i];
        auto const data = subsample(full, frac, cfg.seed);
        rows[i].effective_n = data.size();
        rows[i].report = run(cfg, data, test ? &*test : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned const n_threads = std::min<unsigned>(sweep_threads(), static_cast<unsigned>(values.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  for (auto const &e : errors)
    if (e) std::rethrow_exception(e);

  auto resolved = resolved_json(base, f, f.subsample, full.size());
  resolved["command"] = "sweep";
  resolved["param"] = s.param;
  resolved["values"] = values;
  auto out = open_out(f.out_prefix + ".sweep.csv");
  out << '#' << config_comment(resolved) << '\n';
  out << "value,best_val_map,best_epoch,test_map,effective_n\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto const &r = rows[i].report;
    out << shortest(values[i]) << ',' << shortest(100.0 * r.best_val_map) << ',' << r.best_epoch
        << ',';
    if (r.test_map) out << shortest(100.0 * *r.test_map);
    out << ',' << rows[i].effective_n << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  std::string model, data, tracker, train_data, out;
  std::optional<Index> groups;
  std::string group_key = "positives";
  bool phase_table = false;
};

void add_eval(CLI::App &app, EvalFlags &f) {
  app.add_option("--model", f.model, "Model checkpoint")->required();
  app.add_option("--data", f.data, "Dataset to score")->required();
  app.add_option("--groups", f.groups, "Report mAP over G count-sorted category groups");
  app.add_option("--group-key", f.group_key, "observed | positives")
      ->check(CLI::IsMember({"observed", "positives"}))
      ->capture_default_str();
  app.add_flag("--phase-table", f.phase_table, "Include the highest-loss phase table");
  app.add_option("--tracker", f.tracker, "Tracker dump written by train");
  app.add_option("--train-data", f.train_data,
                 "Training dataset for group counts and tracker rows (default: --data)");
  app.add_option("--out", f.out, "Write the JSON here instead of stdout");
}

int cmd_eval(EvalFlags const &f) {
  if (f.phase_table && f.tracker.empty()) throw UsageError("--phase-table needs --tracker");
  auto const model = load_model(f.model);
  auto const data = load_dataset(f.data);
  if (model.input_dim() != data.dim() || model.num_classes() != data.num_classes()) {
    throw Error("model and dataset dimensions differ");
  }
  auto const train = f.train_data.empty() ? data : load_dataset(f.train_data);
  Matrix const scores = forward(model, data.features());
  ApResult const ap = data.has_truth() ? mean_average_precision(scores, data.truth())
                                       : mean_average_precision_observed(scores, data.states());

  std::optional<GroupedMap> groups;
  if (f.groups) {
    if (!data.has_truth()) throw Error("grouped mAP needs a TRUTH section in --data");
    if (*f.groups < 1 || *f.groups > data.num_classes()) {
      throw UsageError("--groups must lie in [1, K]");
    }
    std::vector<Index> counts(static_cast<std::size_t>(data.num_classes()), 0);
    for (Index i = 0; i < train.size(); ++i) {
      for (Index k = 0; k < train.num_classes(); ++k) {
        if (f.group_key == "observed") {
          counts[static_cast<std::size_t>(k)] += train.states()(i, k) == LabelState::ObservedPositive;
        } else {
          counts[static_cast<std::size_t>(k)] += train.truth()(i, k);
        }
      }
    }
    groups = grouped_map(scores, data.truth(), counts, *f.groups);
  }

  std::optional<PhaseDistribution> phases;
  if (!f.tracker.empty()) {
    if (!train.has_truth()) throw Error("the phase table needs a TRUTH section");
    std::vector<Index> ids;
    auto const tracker = load_tracker(f.tracker, ids);
    for (Index id : ids)
      if (id >= train.size()) throw Error("tracker row " + std::to_string(id) + " is out of range");
    auto const rows = train.select_rows(ids);
    phases = phase_distribution(tracker, rows.truth(), rows.states());
  }

  nlohmann::json cfg = {{"command", "eval"}, {"model", f.model}, {"data", f.data},
                        {"tracker", f.tracker}, {"group_key", f.group_key}};
  if (f.groups) cfg["groups"] = *f.groups;
  auto const j = eval_json(ap, groups, phases, cfg).dump(2);
  if (f.out.empty()) {
    std::cout << j << '\n';
  } else {
    auto out = open_out(f.out);
    out << j << '\n';
  }
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Weakly supervised multi-label training with large-loss modification"};
  app.require_subcommand(1);

  GenFlags gen;
  PartializeFlags part;
  TrainFlags train, sweep_train;
  SweepFlags sweep;
  EvalFlags eval;
  auto *gen_cmd = app.add_subcommand("gen", "Generate a fully observed synthetic dataset");
  add_gen(*gen_cmd, gen);
  auto *part_cmd = app.add_subcommand("partialize", "Hide labels of a fully observed dataset");
  add_partialize(*part_cmd, part);
  auto *train_cmd = app.add_subcommand("train", "Train one model and write metrics");
  add_train(*train_cmd, train);
  auto *eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  add_eval(*eval_cmd, eval);
  auto *sweep_cmd = app.add_subcommand("sweep", "Train one model per parameter value");
  add_train(*sweep_cmd, sweep_train);
  sweep_cmd->add_option("--param", sweep.param, "delta-rel | subsample")
      ->required()
      ->check(CLI::IsMember({"delta-rel", "subsample"}));
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")->required();

  CLI::App *active = &app;
  try {
    app.parse(argc, argv);
    for (auto *sub : app.get_subcommands()) active = sub;
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (part_cmd->parsed()) return cmd_partialize(part);
    if (train_cmd->parsed()) return cmd_train(train, *train_cmd);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_train, sweep, *sweep_cmd);
    return kExitUsage;
  } catch (CLI::CallForHelp const &) {
    std::cout << app.help();
    return kExitOk;
  } catch (CLI::ParseError const &e) {
    for (auto *sub : app.get_subcommands()) active = sub;
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (UsageError const &e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (ConfigError const &e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

} // namespace wsml::cli
