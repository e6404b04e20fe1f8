#include "wsml/dataset.hpp"

#include "wsml/numeric.hpp"
#include "wsml/random.hpp"
#include "text_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace wsml {

char state_token(LabelState s) {
  switch (s) {
    case LabelState::ObservedPositive: return '1';
    case LabelState::ObservedNegative: return '0';
    case LabelState::Unknown: return 'u';
    case LabelState::CorrectedPositive: return 'c';
  }
  return '?';
}

LabelState parse_state_token(char c) {
  switch (c) {
    case '1': return LabelState::ObservedPositive;
    case '0': return LabelState::ObservedNegative;
    case 'u': return LabelState::Unknown;
    case 'c': return LabelState::CorrectedPositive;
    default: throw Error(std::string("illegal label token '") + c + "'");
  }
}

// ---------------------------------------------------------------------------
// LabelStates

LabelStates::LabelStates(Index rows, Index cols, LabelState fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {
  if (rows < 0 || cols < 0) throw ContractError("negative label matrix size");
}

LabelStates::LabelStates(Index rows, Index cols, std::vector<LabelState> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (rows < 0 || cols < 0 || static_cast<Index>(data_.size()) != rows * cols) {
    throw ContractError("label matrix size does not match its data");
  }
}

void LabelStates::transition(Index i, Index k, LabelState to) {
  auto &cell = data_.at(static_cast<std::size_t>(i * cols_ + k));
  if (cell != LabelState::Unknown || to != LabelState::CorrectedPositive) {
    throw ContractError("illegal label transition " + std::string(1, state_token(cell)) +
                        " -> " + std::string(1, state_token(to)) + " at (" +
                        std::to_string(i) + ", " + std::to_string(k) + ")");
  }
  cell = to;
}

LabelStates LabelStates::select_rows(std::span<const Index> rows) const {
  std::vector<LabelState> out;
  out.reserve(rows.size() * static_cast<std::size_t>(cols_));
  for (Index r : rows) {
    auto first = data_.begin() + r * cols_;
    out.insert(out.end(), first, first + cols_);
  }
  return {static_cast<Index>(rows.size()), cols_, std::move(out)};
}

Index LabelStates::count(LabelState s) const {
  return static_cast<Index>(std::count(data_.begin(), data_.end(), s));
}

Index LabelStates::count_observed() const {
  return count(LabelState::ObservedPositive) + count(LabelState::ObservedNegative);
}

bool LabelStates::fully_observed() const {
  return count_observed() == rows_ * cols_;
}

Matrix an_targets(LabelStates const &states) {
  Matrix t(states.rows(), states.cols());
  for (Index i = 0; i < states.rows(); ++i)
    for (Index k = 0; k < states.cols(); ++k) t(i, k) = an_target(states(i, k));
  return t;
}

// ---------------------------------------------------------------------------
// PartialDataset

PartialDataset::PartialDataset(Matrix features, LabelStates states,
                               std::optional<BinaryMatrix> truth)
    : features_(std::move(features)), states_(std::move(states)), truth_(std::move(truth)) {
  if (features_.rows() < 1 || features_.cols() < 1 || states_.cols() < 2) {
    throw ContractError("dataset needs N >= 1, D >= 1, K >= 2");
  }
  if (states_.rows() != features_.rows()) {
    throw ContractError("label rows do not match feature rows");
  }
  if (!features_.allFinite()) throw ContractError("non-finite feature value");
  if (truth_) {
    if (truth_->rows() != states_.rows() || truth_->cols() != states_.cols()) {
      throw ContractError("truth shape does not match labels");
    }
    if ((truth_->array() > 1).any()) throw ContractError("truth entries must be 0 or 1");
    check_truth_agreement();
  }
}

BinaryMatrix const &PartialDataset::truth() const {
  if (!truth_) throw Error("dataset has no ground-truth section");
  return *truth_;
}

void PartialDataset::check_truth_agreement() const {
  if (!truth_) return;
  for (Index i = 0; i < states_.rows(); ++i) {
    for (Index k = 0; k < states_.cols(); ++k) {
      auto s = states_(i, k);
      auto t = (*truth_)(i, k);
      if ((s == LabelState::ObservedPositive && t != 1) ||
          (s == LabelState::ObservedNegative && t != 0)) {
        throw ContractError("observed label disagrees with truth at (" + std::to_string(i) +
                            ", " + std::to_string(k) + ")");
      }
    }
  }
}

PartialDataset PartialDataset::select_rows(std::span<const Index> rows) const {
  Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>> idx(rows.data(),
                                                                static_cast<Index>(rows.size()));
  Matrix f = features_(idx, Eigen::all);
  std::optional<BinaryMatrix> t;
  if (truth_) t = (*truth_)(idx, Eigen::all);
  return {std::move(f), states_.select_rows(rows), std::move(t)};
}

// ---------------------------------------------------------------------------
// Synthetic generation and partialization

void SyntheticSpec::validate() const {
  if (samples < 1 || dim < 1 || classes < 2) {
    throw ConfigError("synthetic spec needs N >= 1, D >= 1, K >= 2");
  }
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw ConfigError("positive rate must lie in (0, 1)");
  }
  if (positive_rate * static_cast<Real>(classes) < 1.0) {
    throw ConfigError("positive rate times K must be at least 1");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
}

namespace {

Matrix standard_normal(Index rows, Index cols, Rng &rng) {
  std::normal_distribution<Real> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the draw order does not depend on storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Labels from uniforms u against probabilities, plus the forced positive for
// rows left empty. Returns the positive count.
Index draw_labels(Matrix const &probs, Matrix const &u, BinaryMatrix &labels) {
  labels = (u.array() < probs.array()).cast<std::uint8_t>();
  for (Index i = 0; i < labels.rows(); ++i) {
    if (labels.row(i).cast<Index>().sum() == 0) {
      Index best = 0;
      probs.row(i).maxCoeff(&best);
      labels(i, best) = 1;
    }
  }
  return labels.cast<Index>().sum();
}

} // namespace

PartialDataset generate_synthetic(SyntheticSpec const &spec) {
  spec.validate();
  auto const n = spec.samples;
  auto const k = spec.classes;

  auto weight_rng  = make_rng(spec.seed, Stream::GeneratorWeights);
  auto feature_rng = make_rng(spec.seed, Stream::GeneratorFeatures);
  auto label_rng   = make_rng(spec.seed, Stream::GeneratorLabels);

  Matrix const w = standard_normal(k, spec.dim, weight_rng);
  Vector const b = standard_normal(k, 1, weight_rng);
  Matrix x = standard_normal(n, spec.dim, feature_rng);

  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  Matrix u(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) u(i, j) = unif(label_rng);

  Matrix const logits = (x * w.transpose()).rowwise() + b.transpose();
  auto probs_at = [&](Real shift) -> Matrix {
    return ((logits.array() + shift) / spec.temperature).unaryExpr(&sigmoid<Real>).matrix();
  };

  // The empirical positive count (including forced positives) is nondecreasing
  // in the shared bias shift, so bisection on the shift converges to the target.
  Real const target = spec.positive_rate * static_cast<Real>(n * k);
  Real lo = -logits.cwiseAbs().maxCoeff() - 40.0 * spec.temperature;
  Real hi = -lo;
  BinaryMatrix labels;
  for (int it = 0; it < 200; ++it) {
    Real const mid = 0.5 * (lo + hi);
    if (static_cast<Real>(draw_labels(probs_at(mid), u, labels)) < target) lo = mid;
    else hi = mid;
  }
  draw_labels(probs_at(hi), u, labels);

  std::vector<LabelState> states(static_cast<std::size_t>(n * k));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j)
      states[static_cast<std::size_t>(i * k + j)] =
          labels(i, j) ? LabelState::ObservedPositive : LabelState::ObservedNegative;
  return {std::move(x), LabelStates(n, k, std::move(states)), labels};
}

namespace {

BinaryMatrix truth_of_full(PartialDataset const &full) {
  if (full.has_truth()) return full.truth();
  BinaryMatrix t(full.size(), full.num_classes());
  for (Index i = 0; i < t.rows(); ++i)
    for (Index k = 0; k < t.cols(); ++k)
      t(i, k) = full.states()(i, k) == LabelState::ObservedPositive ? 1 : 0;
  return t;
}

void require_fully_observed(PartialDataset const &full) {
  if (!full.states().fully_observed()) {
    throw ContractError("partialization requires a fully observed dataset");
  }
}

} // namespace

PartialDataset make_single_positive(PartialDataset const &full, std::uint64_t seed) {
  require_fully_observed(full);
  auto rng = make_rng(seed, Stream::Partialize);
  auto const n = full.size();
  auto const k = full.num_classes();
  std::vector<LabelState> states(static_cast<std::size_t>(n * k), LabelState::Unknown);
  std::vector<Index> positives;
  for (Index i = 0; i < n; ++i) {
    positives.clear();
    for (Index j = 0; j < k; ++j)
      if (full.states()(i, j) == LabelState::ObservedPositive) positives.push_back(j);
    if (positives.empty()) {
      throw ContractError("sample " + std::to_string(i) + " has no positive label");
    }
    Index const keep = positives[static_cast<std::size_t>(
        uniform_index(rng, static_cast<Index>(positives.size())))];
    states[static_cast<std::size_t>(i * k + keep)] = LabelState::ObservedPositive;
  }
  return {full.features(), LabelStates(n, k, std::move(states)), truth_of_full(full)};
}

PartialDataset make_fraction_observed(PartialDataset const &full, Real fraction,
                                      std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("observed fraction must lie in (0, 1]");
  }
  require_fully_observed(full);
  auto rng = make_rng(seed, Stream::Partialize);
  auto const n = full.size();
  auto const k = full.num_classes();
  auto const keep = random_subset(n * k, floor_count(fraction, n * k), rng);
  auto const &src = full.states().row_major();
  std::vector<LabelState> states(src.size(), LabelState::Unknown);
  for (Index e : keep) states[static_cast<std::size_t>(e)] = src[static_cast<std::size_t>(e)];
  return {full.features(), LabelStates(n, k, std::move(states)), truth_of_full(full)};
}

std::vector<Index> subsample_rows(Index n, Real fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("subsample fraction must lie in (0, 1]");
  }
  Index const m = floor_count(fraction, n);
  if (m == 0) throw ConfigError("subsample leaves no samples");
  auto rng = make_rng(seed, Stream::Subsample);
  return random_subset(n, m, rng);
}

PartialDataset subsample(PartialDataset const &ds, Real fraction, std::uint64_t seed) {
  return ds.select_rows(subsample_rows(ds.size(), fraction, seed));
}

// ---------------------------------------------------------------------------
// Text format

void write_dataset(PartialDataset const &ds, std::ostream &out,
                   std::string const &trailer_comment) {
  out << "WSML/1\n" << ds.size() << ' ' << ds.dim() << ' ' << ds.num_classes() << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) {
      if (j) out << ' ';
      out << detail::format_real(ds.features()(i, j));
    }
    out << '\n';
  }
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index k = 0; k < ds.num_classes(); ++k) {
      if (k) out << ' ';
      out << state_token(ds.states()(i, k));
    }
    out << '\n';
  }
  if (ds.has_truth()) {
    out << "TRUTH\n";
    for (Index i = 0; i < ds.size(); ++i) {
      for (Index k = 0; k < ds.num_classes(); ++k) {
        if (k) out << ' ';
        out << static_cast<int>(ds.truth()(i, k));
      }
      out << '\n';
    }
  }
  if (!trailer_comment.empty()) out << '#' << trailer_comment << '\n';
}

PartialDataset read_dataset(std::istream &in) {
  detail::LineReader reader(in);
  auto header = reader.next("WSML/1 header");
  if (detail::split_ws(header) != std::vector<std::string_view>{"WSML/1"}) {
    throw ParseError("malformed header, expected 'WSML/1'", reader.line());
  }
  auto dims = detail::next_fields(reader, "dimension line", 3);
  auto const n = detail::parse_integer(dims[0], reader.line());
  auto const d = detail::parse_integer(dims[1], reader.line());
  auto const k = detail::parse_integer(dims[2], reader.line());
  if (n < 1 || d < 1 || k < 2) {
    throw ParseError("invalid dimensions, need N >= 1, D >= 1, K >= 2", reader.line());
  }

  Matrix features(n, d);
  for (Index i = 0; i < n; ++i) {
    auto f = detail::next_fields(reader, "feature row", static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) {
      features(i, j) = detail::parse_real(f[static_cast<std::size_t>(j)], reader.line());
      if (!std::isfinite(features(i, j))) {
        throw ParseError("non-finite feature value", reader.line());
      }
    }
  }

  std::vector<LabelState> states(static_cast<std::size_t>(n * k));
  for (Index i = 0; i < n; ++i) {
    auto f = detail::next_fields(reader, "label row", static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) {
      auto tok = f[static_cast<std::size_t>(j)];
      if (tok.size() != 1) {
        throw ParseError("illegal label token '" + std::string(tok) + "'", reader.line());
      }
      try {
        states[static_cast<std::size_t>(i * k + j)] = parse_state_token(tok[0]);
      } catch (Error const &e) {
        throw ParseError(std::string(e.what()), reader.line());
      }
    }
  }

  std::optional<BinaryMatrix> truth;
  std::string rest;
  if (reader.peek_content(rest)) {
    if (detail::split_ws(rest) != std::vector<std::string_view>{"TRUTH"}) {
      throw ParseError("unexpected content, expected 'TRUTH' or end of file", reader.line());
    }
    truth = BinaryMatrix(n, k);
    for (Index i = 0; i < n; ++i) {
      auto f = detail::next_fields(reader, "truth row", static_cast<std::size_t>(k));
      for (Index j = 0; j < k; ++j) {
        auto tok = f[static_cast<std::size_t>(j)];
        if (tok != "0" && tok != "1") {
          throw ParseError("illegal truth token '" + std::string(tok) + "'", reader.line());
        }
        (*truth)(i, j) = tok == "1" ? 1 : 0;
      }
    }
    if (reader.peek_content(rest)) {
      throw ParseError("trailing content after TRUTH section", reader.line());
    }
  }

  try {
    return {std::move(features), LabelStates(n, k, std::move(states)), std::move(truth)};
  } catch (ContractError const &e) {
    throw ParseError(e.what(), reader.line());
  }
}

void save_dataset(PartialDataset const &ds, std::filesystem::path const &path,
                  std::string const &trailer_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_dataset(ds, out, trailer_comment);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

PartialDataset load_dataset(std::filesystem::path const &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (ParseError const &e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

} // namespace wsml
