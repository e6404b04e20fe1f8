#include "wsml/model.hpp"

#include "wsml/numeric.hpp"
#include "wsml/random.hpp"
#include "text_io.hpp"

#include <array>
#include <cmath>
#include <fstream>

namespace wsml {

std::string_view architecture_token(Architecture a) {
  return a == Architecture::Linear ? "linear" : "mlp1";
}

Architecture parse_architecture(std::string_view token) {
  if (token == "linear") return Architecture::Linear;
  if (token == "mlp1") return Architecture::Mlp1;
  throw ConfigError("unknown architecture '" + std::string(token) + "'");
}

Gradients Gradients::zeros_like(Classifier const &m) {
  return {Matrix::Zero(m.hidden_weight.rows(), m.hidden_weight.cols()),
          Vector::Zero(m.hidden_bias.size()),
          Matrix::Zero(m.output_weight.rows(), m.output_weight.cols()),
          Vector::Zero(m.output_bias.size())};
}

Classifier init_classifier(Architecture arch, Index dim, Index classes, Index hidden,
                           std::uint64_t seed) {
  if (dim < 1 || classes < 1) throw ConfigError("classifier needs D >= 1 and K >= 1");
  if (arch == Architecture::Mlp1 && hidden < 1) {
    throw ConfigError("mlp1 needs at least one hidden unit");
  }
  auto rng = make_rng(seed, Stream::Init);
  auto draw = [&rng](Index rows, Index cols) {
    std::normal_distribution<Real> normal(0.0, 1.0 / std::sqrt(static_cast<Real>(cols)));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
  };

  Classifier model;
  model.arch = arch;
  if (arch == Architecture::Mlp1) {
    model.hidden_weight = draw(hidden, dim);
    model.hidden_bias = Vector::Zero(hidden);
    model.output_weight = draw(classes, hidden);
  } else {
    model.output_weight = draw(classes, dim);
  }
  model.output_bias = Vector::Zero(classes);
  return model;
}

namespace {

struct Activations {
  Matrix hidden_pre;  // B x H
  Matrix hidden;      // B x H
  Matrix logits;      // B x K
};

Activations run_forward(Classifier const &model, Matrix const &x) {
  if (x.cols() != model.input_dim()) {
    throw ContractError("input has " + std::to_string(x.cols()) + " features, model expects " +
                        std::to_string(model.input_dim()));
  }
  if (!x.allFinite()) throw ContractError("non-finite model input");
  Activations a;
  if (model.arch == Architecture::Mlp1) {
    a.hidden_pre = (x * model.hidden_weight.transpose()).rowwise() +
                   model.hidden_bias.transpose();
    a.hidden = a.hidden_pre.cwiseMax(0.0);
    a.logits = (a.hidden * model.output_weight.transpose()).rowwise() +
               model.output_bias.transpose();
  } else {
    a.logits = (x * model.output_weight.transpose()).rowwise() +
               model.output_bias.transpose();
  }
  return a;
}

Matrix probabilities(Matrix const &z) {
  return z.unaryExpr([](Real v) { return clamp_probability(sigmoid(v)); });
}

void check_loss_shapes(Classifier const &model, Matrix const &x, Matrix const &targets,
                       Matrix const &weights) {
  if (targets.rows() != x.rows() || weights.rows() != x.rows() ||
      targets.cols() != model.num_classes() || weights.cols() != model.num_classes()) {
    throw ContractError("targets/weights shape does not match batch x classes");
  }
}

} // namespace

Matrix logits(Classifier const &model, Matrix const &x) {
  return run_forward(model, x).logits;
}

Matrix forward(Classifier const &model, Matrix const &x) {
  return probabilities(run_forward(model, x).logits);
}

Real weighted_loss(Classifier const &model, Matrix const &x, Matrix const &targets,
                   Matrix const &weights) {
  check_loss_shapes(model, x, targets, weights);
  Matrix const p = forward(model, x);
  auto const bce = -(targets.array() * p.array().log() +
                     (1.0 - targets.array()) * (1.0 - p.array()).log());
  return (weights.array() * bce).sum() / static_cast<Real>(x.rows() * model.num_classes());
}

Gradients backward(Classifier const &model, Matrix const &x, Matrix const &targets,
                   Matrix const &weights) {
  check_loss_shapes(model, x, targets, weights);
  auto const a = run_forward(model, x);
  Real const scale = 1.0 / static_cast<Real>(x.rows() * model.num_classes());
  Matrix const sig = a.logits.unaryExpr(&sigmoid<Real>);
  // d(BCE o sigmoid)/dz = sigmoid(z) - t
  Matrix const dz = (weights.array() * (sig - targets).array() * scale).matrix();

  Gradients g;
  g.output_bias = dz.colwise().sum().transpose();
  if (model.arch == Architecture::Mlp1) {
    g.output_weight = dz.transpose() * a.hidden;
    Matrix const dh = ((dz * model.output_weight).array() *
                       (a.hidden_pre.array() > 0.0).cast<Real>())
                          .matrix();
    g.hidden_weight = dh.transpose() * x;
    g.hidden_bias = dh.colwise().sum().transpose();
  } else {
    g.output_weight = dz.transpose() * x;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizers

OptimizerState init_optimizer(OptimizerConfig const &config, Classifier const &model) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(config.output_lr_multiplier > 0.0)) {
    throw ConfigError("output learning-rate multiplier must be positive");
  }
  return {config, Gradients::zeros_like(model), Gradients::zeros_like(model), 0};
}

namespace {

std::array<Eigen::Map<Vector>, 4> views(Classifier &m) {
  return {Eigen::Map<Vector>(m.hidden_weight.data(), m.hidden_weight.size()),
          Eigen::Map<Vector>(m.hidden_bias.data(), m.hidden_bias.size()),
          Eigen::Map<Vector>(m.output_weight.data(), m.output_weight.size()),
          Eigen::Map<Vector>(m.output_bias.data(), m.output_bias.size())};
}

std::array<Eigen::Map<Vector>, 4> views(Gradients &g) {
  return {Eigen::Map<Vector>(g.hidden_weight.data(), g.hidden_weight.size()),
          Eigen::Map<Vector>(g.hidden_bias.data(), g.hidden_bias.size()),
          Eigen::Map<Vector>(g.output_weight.data(), g.output_weight.size()),
          Eigen::Map<Vector>(g.output_bias.data(), g.output_bias.size())};
}

std::array<Eigen::Map<const Vector>, 4> views(Gradients const &g) {
  return {Eigen::Map<const Vector>(g.hidden_weight.data(), g.hidden_weight.size()),
          Eigen::Map<const Vector>(g.hidden_bias.data(), g.hidden_bias.size()),
          Eigen::Map<const Vector>(g.output_weight.data(), g.output_weight.size()),
          Eigen::Map<const Vector>(g.output_bias.data(), g.output_bias.size())};
}

// Tensors 0 and 1 belong to the hidden layer.
constexpr bool is_hidden_tensor(std::size_t t) { return t < 2; }

} // namespace

void step(Classifier &model, Gradients const &grads, OptimizerState &opt) {
  auto const &cfg = opt.config;
  ++opt.step;
  Real const bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(opt.step));
  Real const bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(opt.step));

  auto params = views(model);
  auto const g = views(grads);
  auto m = views(opt.first_moment);
  auto v = views(opt.second_moment);
  for (std::size_t t = 0; t < params.size(); ++t) {
    bool const hidden = is_hidden_tensor(t);
    if (hidden && model.frozen_hidden) continue;
    if (g[t].size() != params[t].size()) throw ContractError("gradient shape mismatch");
    Real const lr = cfg.learning_rate * (hidden ? 1.0 : cfg.output_lr_multiplier);
    if (cfg.kind == OptimizerKind::Sgd) {
      params[t] -= lr * g[t];
      continue;
    }
    m[t] = cfg.beta1 * m[t] + (1.0 - cfg.beta1) * g[t];
    v[t] = cfg.beta2 * v[t] + (1.0 - cfg.beta2) * g[t].cwiseAbs2();
    params[t].array() -=
        lr * (m[t].array() / bc1) / ((v[t].array() / bc2).sqrt() + cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Gradient check

Real grad_check(Classifier const &model, Matrix const &x, Matrix const &targets,
                Matrix const &weights, Real h) {
  Gradients const analytic = backward(model, x, targets, weights);
  auto const grad_views = views(analytic);
  Classifier probe = model;
  auto param_views = views(probe);

  Real worst = 0.0;
  for (std::size_t t = 0; t < param_views.size(); ++t) {
    auto &theta = param_views[t];
    for (Index i = 0; i < theta.size(); ++i) {
      Real const saved = theta[i];
      theta[i] = saved + h;
      Real const up = weighted_loss(probe, x, targets, weights);
      theta[i] = saved - h;
      Real const down = weighted_loss(probe, x, targets, weights);
      theta[i] = saved;
      Real const numeric = (up - down) / (2.0 * h);
      Real const ga = grad_views[t][i];
      Real const denom = std::max({std::abs(ga), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(ga - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

void write_tensor(std::ostream &out, Eigen::Ref<const Matrix> const &t) {
  for (Index i = 0; i < t.rows(); ++i) {
    for (Index j = 0; j < t.cols(); ++j) {
      if (j) out << ' ';
      out << detail::format_real(t(i, j));
    }
    out << '\n';
  }
}

Matrix read_tensor(detail::LineReader &reader, Index rows, Index cols) {
  Matrix t(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    auto f = detail::next_fields(reader, "parameter row", static_cast<std::size_t>(cols));
    for (Index j = 0; j < cols; ++j) {
      t(i, j) = detail::parse_real(f[static_cast<std::size_t>(j)], reader.line());
      if (!std::isfinite(t(i, j))) throw ParseError("non-finite parameter", reader.line());
    }
  }
  return t;
}

} // namespace

void write_model(Classifier const &model, std::ostream &out,
                 std::string const &trailer_comment) {
  out << "WSMLMODEL/1\n" << architecture_token(model.arch) << '\n';
  out << model.input_dim() << ' ' << model.num_classes() << ' ' << model.hidden_units() << '\n';
  if (model.arch == Architecture::Mlp1) {
    write_tensor(out, model.hidden_weight);
    write_tensor(out, model.hidden_bias.transpose());
  }
  write_tensor(out, model.output_weight);
  write_tensor(out, model.output_bias.transpose());
  if (!trailer_comment.empty()) out << '#' << trailer_comment << '\n';
}

Classifier read_model(std::istream &in) {
  detail::LineReader reader(in);
  if (detail::split_ws(reader.next("WSMLMODEL/1 header")) !=
      std::vector<std::string_view>{"WSMLMODEL/1"}) {
    throw ParseError("malformed header, expected 'WSMLMODEL/1'", reader.line());
  }
  Classifier model;
  auto arch = detail::next_fields(reader, "architecture line", 1);
  try {
    model.arch = parse_architecture(arch[0]);
  } catch (ConfigError const &e) {
    throw ParseError(e.what(), reader.line());
  }
  auto dims = detail::next_fields(reader, "dimension line", 3);
  auto const d = detail::parse_integer(dims[0], reader.line());
  auto const k = detail::parse_integer(dims[1], reader.line());
  auto const h = detail::parse_integer(dims[2], reader.line());
  bool const mlp = model.arch == Architecture::Mlp1;
  if (d < 1 || k < 1 || (mlp ? h < 1 : h != 0)) {
    throw ParseError("invalid model dimensions", reader.line());
  }
  if (mlp) {
    model.hidden_weight = read_tensor(reader, h, d);
    model.hidden_bias = read_tensor(reader, 1, h).transpose();
  }
  model.output_weight = read_tensor(reader, k, mlp ? h : d);
  model.output_bias = read_tensor(reader, 1, k).transpose();
  std::string rest;
  if (reader.peek_content(rest)) throw ParseError("trailing content", reader.line());
  return model;
}

void save_model(Classifier const &model, std::filesystem::path const &path,
                std::string const &trailer_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_model(model, out, trailer_comment);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

Classifier load_model(std::filesystem::path const &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return read_model(in);
  } catch (ParseError const &e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  }
}

} // namespace wsml
