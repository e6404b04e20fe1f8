#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wsml/model.hpp"
#include "wsml/random.hpp"

#include <random>
#include <sstream>

using namespace wsml;

namespace {

Matrix random_matrix(Index r, Index c, Rng &rng, Real scale = 1.0) {
  std::normal_distribution<Real> n(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_unit(Index r, Index c, Rng &rng) {
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Flatten parameters in a fixed order; the test's own view of the layout.
std::vector<Real *> parameter_slots(Classifier &m) {
  std::vector<Real *> out;
  for (Index i = 0; i < m.hidden_weight.size(); ++i) out.push_back(m.hidden_weight.data() + i);
  for (Index i = 0; i < m.hidden_bias.size(); ++i) out.push_back(m.hidden_bias.data() + i);
  for (Index i = 0; i < m.output_weight.size(); ++i) out.push_back(m.output_weight.data() + i);
  for (Index i = 0; i < m.output_bias.size(); ++i) out.push_back(m.output_bias.data() + i);
  return out;
}

std::vector<Real> flatten(Gradients const &g) {
  std::vector<Real> out;
  out.insert(out.end(), g.hidden_weight.data(), g.hidden_weight.data() + g.hidden_weight.size());
  out.insert(out.end(), g.hidden_bias.data(), g.hidden_bias.data() + g.hidden_bias.size());
  out.insert(out.end(), g.output_weight.data(), g.output_weight.data() + g.output_weight.size());
  out.insert(out.end(), g.output_bias.data(), g.output_bias.data() + g.output_bias.size());
  return out;
}

// Loss written out directly from its definition, independent of the library.
Real oracle_loss(Classifier const &m, Matrix const &x, Matrix const &t, Matrix const &w) {
  Matrix h = x;
  if (m.arch == Architecture::Mlp1) {
    h = ((x * m.hidden_weight.transpose()).rowwise() + m.hidden_bias.transpose()).cwiseMax(0.0);
  }
  Matrix const z = (h * m.output_weight.transpose()).rowwise() + m.output_bias.transpose();
  Real sum = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index k = 0; k < z.cols(); ++k) {
      Real const p = 1.0 / (1.0 + std::exp(-z(i, k)));
      sum += w(i, k) * (-t(i, k) * std::log(p) - (1.0 - t(i, k)) * std::log(1.0 - p));
    }
  }
  return sum / static_cast<Real>(z.size());
}

Real oracle_max_rel_error(Classifier model, Matrix const &x, Matrix const &t, Matrix const &w) {
  auto const analytic = flatten(backward(model, x, t, w));
  auto slots = parameter_slots(model);
  Real worst = 0.0;
  Real const h = 1e-5;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    Real const keep = *slots[j];
    *slots[j] = keep + h;
    Real const up = oracle_loss(model, x, t, w);
    *slots[j] = keep - h;
    Real const down = oracle_loss(model, x, t, w);
    *slots[j] = keep;
    Real const numeric = (up - down) / (2.0 * h);
    Real const denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
  }
  return worst;
}

bool relu_near_kink(Classifier const &m, Matrix const &x) {
  if (m.arch != Architecture::Mlp1) return false;
  Matrix const pre = (x * m.hidden_weight.transpose()).rowwise() + m.hidden_bias.transpose();
  return (pre.array().abs() < 1e-4).any();
}

} // namespace

TEST_CASE("init_classifier") {
  auto const m = init_classifier(Architecture::Linear, 2, 3, 0, 0);
  CHECK(m.output_weight.rows() == 3);
  CHECK(m.output_weight.cols() == 2);
  CHECK(m.output_bias.size() == 3);
  CHECK(m.output_bias.isZero());
  CHECK(m.hidden_weight.size() == 0);
  CHECK(init_classifier(Architecture::Mlp1, 4, 3, 5, 9) == init_classifier(Architecture::Mlp1, 4, 3, 5, 9));
  CHECK_THROWS_AS(init_classifier(Architecture::Mlp1, 4, 3, 0, 9), ConfigError);
  CHECK_THROWS_AS(init_classifier(Architecture::Linear, 0, 3, 0, 9), ConfigError);

  // Standard deviation 1/sqrt(fan_in).
  auto const big = init_classifier(Architecture::Mlp1, 400, 300, 500, 3);
  Real const sd1 = std::sqrt(big.hidden_weight.array().square().mean());
  Real const sd2 = std::sqrt(big.output_weight.array().square().mean());
  CHECK(sd1 == doctest::Approx(1.0 / 20.0).epsilon(0.01));
  CHECK(sd2 == doctest::Approx(1.0 / std::sqrt(500.0)).epsilon(0.01));
}

TEST_CASE("forward") {
  Classifier m = init_classifier(Architecture::Linear, 2, 3, 0, 0);
  m.output_weight.setZero();
  CHECK((forward(m, Matrix::Ones(4, 2)).array() == 0.5).all());

  m.output_bias.setConstant(40.0);
  CHECK(forward(m, Matrix::Ones(1, 2))(0, 0) == 1.0 - 1e-7);
  m.output_bias.setConstant(-40.0);
  CHECK(forward(m, Matrix::Ones(1, 2))(0, 0) == 1e-7);

  Rng rng(5);
  auto const mlp = init_classifier(Architecture::Mlp1, 6, 4, 8, 1);
  Matrix const x = random_matrix(16, 6, rng);
  Matrix const all = forward(mlp, x);
  for (Index i = 0; i < 16; ++i) CHECK(forward(mlp, x.row(i)) == all.row(i));

  Matrix bad = x;
  bad(3, 2) = std::nan("");
  CHECK_THROWS_AS(forward(mlp, bad), ContractError);
  CHECK_THROWS_AS(forward(mlp, Matrix::Zero(2, 5)), ContractError);
}

TEST_CASE("backward hand example") {
  Classifier m = init_classifier(Architecture::Linear, 1, 1, 0, 0);
  m.output_weight.setZero();
  Matrix const one = Matrix::Ones(1, 1);
  auto const g = backward(m, one, one, one);
  CHECK(g.output_weight(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(g.output_bias(0) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("zero weights give exactly zero gradients") {
  Rng rng(8);
  auto const m = init_classifier(Architecture::Mlp1, 3, 4, 5, 2);
  Matrix const x = random_matrix(6, 3, rng);
  auto const g = backward(m, x, random_unit(6, 4, rng), Matrix::Zero(6, 4));
  for (Real v : flatten(g)) CHECK(v == 0.0);
  CHECK(grad_check(m, x, random_unit(6, 4, rng), Matrix::Zero(6, 4)) == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2718);
  std::uniform_int_distribution<Index> dim(1, 6), cls(1, 5), hid(1, 6), batch(1, 8);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto const arch = trial % 2 ? Architecture::Mlp1 : Architecture::Linear;
    Index const d = dim(rng), k = cls(rng), b = batch(rng);
    auto m = init_classifier(arch, d, k, hid(rng), rng());
    m.output_bias = random_matrix(k, 1, rng, 0.5);
    if (arch == Architecture::Mlp1) m.hidden_bias = random_matrix(m.hidden_units(), 1, rng, 0.5);
    Matrix x = random_matrix(b, d, rng);
    while (relu_near_kink(m, x)) x = random_matrix(b, d, rng);
    Matrix const t = random_unit(b, k, rng);
    Matrix const w = random_unit(b, k, rng) * 2.0;
    CHECK(grad_check(m, x, t, w) < 1e-4);
    CHECK(oracle_max_rel_error(m, x, t, w) < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);

  SUBCASE("linear K=2, D=3, batch of 4") {
    auto const m = init_classifier(Architecture::Linear, 3, 2, 0, 77);
    Matrix const x = random_matrix(4, 3, rng);
    CHECK(grad_check(m, x, random_unit(4, 2, rng), Matrix::Ones(4, 2)) < 1e-4);
  }
}

TEST_CASE("weighted_loss matches the oracle") {
  Rng rng(4);
  auto const m = init_classifier(Architecture::Mlp1, 3, 4, 5, 6);
  Matrix const x = random_matrix(7, 3, rng);
  Matrix const t = random_unit(7, 4, rng), w = random_unit(7, 4, rng);
  CHECK(weighted_loss(m, x, t, w) == doctest::Approx(oracle_loss(m, x, t, w)).epsilon(1e-12));
}

TEST_CASE("permuting categories permutes output-layer gradients") {
  Rng rng(31);
  auto const m = init_classifier(Architecture::Mlp1, 4, 5, 6, 12);
  Matrix const x = random_matrix(8, 4, rng);
  Matrix const t = random_unit(8, 5, rng), w = random_unit(8, 5, rng);
  std::vector<Index> perm{3, 0, 4, 1, 2};
  Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>> p(perm.data(), 5);

  Classifier pm = m;
  pm.output_weight = m.output_weight(p, Eigen::all);
  pm.output_bias = m.output_bias(p);
  auto const g = backward(m, x, t, w);
  auto const gp = backward(pm, x, t(Eigen::all, p), w(Eigen::all, p));
  CHECK((gp.output_weight - g.output_weight(p, Eigen::all)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((gp.output_bias - g.output_bias(p)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((gp.hidden_weight - g.hidden_weight).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((gp.hidden_bias - g.hidden_bias).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("optimizer steps") {
  SUBCASE("sgd") {
    Classifier m = init_classifier(Architecture::Linear, 1, 1, 0, 0);
    m.output_weight.setConstant(1.0);
    m.output_bias.setConstant(1.0);
    auto g = Gradients::zeros_like(m);
    g.output_weight.setConstant(2.0);
    g.output_bias.setConstant(2.0);
    auto opt = init_optimizer({OptimizerKind::Sgd, 0.1}, m);
    step(m, g, opt);
    CHECK(m.output_weight(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(m.output_bias(0) == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("adam first step moves each parameter by about the learning rate") {
    auto m = init_classifier(Architecture::Mlp1, 3, 2, 4, 1);
    auto const before = m;
    auto g = Gradients::zeros_like(m);
    for (auto *t : {&g.hidden_weight, &g.output_weight}) t->setOnes();
    g.hidden_bias.setOnes();
    g.output_bias.setOnes();
    auto opt = init_optimizer({}, m);
    step(m, g, opt);
    // m_hat = 1, v_hat = 1: delta = lr / (1 + eps).
    Real const expect = 1e-3 / (1.0 + 1e-8);
    CHECK(((before.hidden_weight - m.hidden_weight).array() - expect).abs().maxCoeff() < 1e-15);
    CHECK(((before.output_bias - m.output_bias).array() - expect).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("frozen hidden layer is left unchanged") {
    auto m = init_classifier(Architecture::Mlp1, 3, 2, 4, 1);
    m.frozen_hidden = true;
    auto const before = m;
    auto g = Gradients::zeros_like(m);
    g.hidden_weight.setOnes();
    g.hidden_bias.setOnes();
    g.output_weight.setOnes();
    for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
      auto opt = init_optimizer({kind, 0.1}, m);
      step(m, g, opt);
      CHECK(m.hidden_weight == before.hidden_weight);
      CHECK(m.hidden_bias == before.hidden_bias);
      CHECK(m.output_weight != before.output_weight);
    }
  }
  SUBCASE("output learning-rate multiplier") {
    auto m = init_classifier(Architecture::Mlp1, 2, 2, 2, 1);
    auto const before = m;
    auto g = Gradients::zeros_like(m);
    g.hidden_weight.setOnes();
    g.output_weight.setOnes();
    auto opt = init_optimizer({OptimizerKind::Sgd, 0.1, 10.0}, m);
    step(m, g, opt);
    CHECK(((before.hidden_weight - m.hidden_weight).array() - 0.1).abs().maxCoeff() < 1e-15);
    CHECK(((before.output_weight - m.output_weight).array() - 1.0).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("full-batch sgd decreases the loss monotonically") {
  Rng rng(17);
  Matrix x = random_matrix(20, 2, rng);
  Matrix t(20, 2);
  for (Index i = 0; i < 20; ++i) {
    t(i, 0) = x(i, 0) + x(i, 1) > 0.0;
    t(i, 1) = x(i, 0) - x(i, 1) > 0.0;
  }
  Matrix const w = Matrix::Ones(20, 2);
  for (auto arch : {Architecture::Linear, Architecture::Mlp1}) {
    auto m = init_classifier(arch, 2, 2, 8, 3);
    auto opt = init_optimizer({OptimizerKind::Sgd, 0.05}, m);
    Real prev = weighted_loss(m, x, t, w);
    for (int s = 0; s < 50; ++s) {
      step(m, backward(m, x, t, w), opt);
      Real const cur = weighted_loss(m, x, t, w);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("model checkpoint round trip") {
  Rng rng(123);
  std::uniform_int_distribution<Index> dim(1, 7);
  for (int trial = 0; trial < 100; ++trial) {
    auto const arch = trial % 3 ? Architecture::Mlp1 : Architecture::Linear;
    auto m = init_classifier(arch, dim(rng), dim(rng), dim(rng), rng());
    m.output_bias = random_matrix(m.num_classes(), 1, rng, 1e5);
    std::stringstream ss;
    write_model(m, ss, "cfg {}");
    CHECK(read_model(ss) == m);
  }
  std::istringstream bad("WSMLMODEL/1\nlinear\n2 2 0\n1 2\n3\n");
  CHECK_THROWS_AS(read_model(bad), ParseError);
}
