#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wsml/dataset.hpp"
#include "wsml/random.hpp"

#include <random>
#include <sstream>

using namespace wsml;
using LS = LabelState;

namespace {

PartialDataset full_from_truth(BinaryMatrix const &truth, Index dim = 2) {
  std::vector<LS> states;
  for (Index i = 0; i < truth.rows(); ++i)
    for (Index k = 0; k < truth.cols(); ++k)
      states.push_back(truth(i, k) ? LS::ObservedPositive : LS::ObservedNegative);
  return PartialDataset(Matrix::Zero(truth.rows(), dim),
                        LabelStates(truth.rows(), truth.cols(), states), truth);
}

PartialDataset random_dataset(Rng &rng) {
  std::uniform_int_distribution<Index> n_dist(1, 12), d_dist(1, 6), k_dist(2, 7);
  std::uniform_int_distribution<int> state_dist(0, 3);
  std::normal_distribution<Real> feat(0.0, 1e3);
  Index const n = n_dist(rng), d = d_dist(rng), k = k_dist(rng);
  Matrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = feat(rng) * std::pow(10.0, state_dist(rng) * 7 - 10);
  std::vector<LS> states;
  BinaryMatrix truth(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) {
      auto const s = static_cast<LS>(state_dist(rng));
      states.push_back(s);
      truth(i, c) = s == LS::ObservedPositive || s == LS::CorrectedPositive ||
                    (s == LS::Unknown && state_dist(rng) < 2);
    }
  }
  bool const with_truth = state_dist(rng) != 0;
  return PartialDataset(x, LabelStates(n, k, states),
                        with_truth ? std::optional<BinaryMatrix>(truth) : std::nullopt);
}

PartialDataset roundtrip(PartialDataset const &ds) {
  std::stringstream ss;
  write_dataset(ds, ss, "cfg {}");
  return read_dataset(ss);
}

int parse_error_line(std::string const &text) {
  std::istringstream in(text);
  try {
    read_dataset(in);
  } catch (ParseError const &e) {
    return e.line();
  }
  return -1;
}

} // namespace

TEST_CASE("an_targets maps states to Assume-Negative targets") {
  LabelStates a(1, 4, {LS::Unknown, LS::ObservedPositive, LS::Unknown, LS::ObservedNegative});
  CHECK(an_targets(a) == (Matrix(1, 4) << 0, 1, 0, 0).finished());
  LabelStates b(1, 2, {LS::CorrectedPositive, LS::Unknown});
  CHECK(an_targets(b) == (Matrix(1, 2) << 1, 0).finished());
  CHECK(an_targets(LabelStates(1, 5)).isZero());
}

TEST_CASE("only Unknown -> CorrectedPositive is a legal transition") {
  Rng rng(11);
  std::uniform_int_distribution<int> s(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    auto const from = static_cast<LS>(s(rng));
    auto const to = static_cast<LS>(s(rng));
    LabelStates st(1, 2, {from, LS::Unknown});
    if (from == LS::Unknown && to == LS::CorrectedPositive) {
      st.transition(0, 0, to);
      CHECK(st(0, 0) == LS::CorrectedPositive);
    } else {
      CHECK_THROWS_AS(st.transition(0, 0, to), ContractError);
      CHECK(st(0, 0) == from);
    }
  }
}

TEST_CASE("dataset invariants are enforced at construction") {
  CHECK_THROWS_AS(PartialDataset(Matrix::Zero(2, 1), LabelStates(2, 1)), ContractError);
  CHECK_THROWS_AS(PartialDataset(Matrix::Zero(2, 0), LabelStates(2, 2)), ContractError);
  Matrix bad = Matrix::Zero(2, 1);
  bad(1, 0) = std::numeric_limits<Real>::infinity();
  CHECK_THROWS_AS(PartialDataset(bad, LabelStates(2, 2)), ContractError);
  BinaryMatrix truth = BinaryMatrix::Zero(1, 2);
  CHECK_THROWS_AS(
      PartialDataset(Matrix::Zero(1, 1), LabelStates(1, 2, {LS::ObservedPositive, LS::Unknown}), truth),
      ContractError);
  CHECK_THROWS_AS(PartialDataset(Matrix::Zero(1, 1), LabelStates(1, 2)).truth(), Error);
}

TEST_CASE("generate_synthetic") {
  SUBCASE("small spec has a positive in every row") {
    auto const ds = generate_synthetic({4, 2, 3, 0.4, 1.0, 7});
    REQUIRE(ds.truth().rows() == 4);
    REQUIRE(ds.truth().cols() == 3);
    for (Index i = 0; i < 4; ++i) CHECK(ds.truth().row(i).cast<int>().sum() >= 1);
    CHECK(ds.states().fully_observed());
  }
  SUBCASE("benchmark positive rate lies within 10% of the target") {
    auto const ds = generate_synthetic({2000, 20, 10, 0.3, 1.0, 1});
    Real const rate = ds.truth().cast<Real>().mean();
    CHECK(rate >= 0.27);
    CHECK(rate <= 0.33);
    for (Index i = 0; i < ds.size(); ++i) CHECK(ds.truth().row(i).cast<int>().sum() >= 1);
  }
  SUBCASE("deterministic given the seed") {
    SyntheticSpec spec{50, 4, 5, 0.3, 1.0, 99};
    CHECK(generate_synthetic(spec) == generate_synthetic(spec));
    spec.seed = 100;
    CHECK_FALSE(generate_synthetic(spec) == generate_synthetic({50, 4, 5, 0.3, 1.0, 99}));
  }
  SUBCASE("invalid specs are rejected") {
    CHECK_THROWS_AS(generate_synthetic({0, 2, 3, 0.4, 1.0, 1}), ConfigError);
    CHECK_THROWS_AS(generate_synthetic({4, 2, 1, 0.4, 1.0, 1}), ConfigError);
    CHECK_THROWS_AS(generate_synthetic({4, 2, 3, 0.2, 1.0, 1}), ConfigError);  // 0.2 * 3 < 1
    CHECK_THROWS_AS(generate_synthetic({4, 2, 3, 0.4, 0.0, 1}), ConfigError);
  }
}

TEST_CASE("make_single_positive") {
  SUBCASE("a single positive is forced") {
    BinaryMatrix t(1, 4);
    t << 0, 1, 0, 0;
    auto const sp = make_single_positive(full_from_truth(t), 3);
    CHECK(sp.states() == LabelStates(1, 4, {LS::Unknown, LS::ObservedPositive, LS::Unknown, LS::Unknown}));
    CHECK(sp.truth() == t);
  }
  SUBCASE("exactly one of several positives survives") {
    BinaryMatrix t(1, 4);
    t << 1, 0, 1, 1;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto const sp = make_single_positive(full_from_truth(t), seed);
      CHECK(sp.states().count(LS::ObservedPositive) == 1);
      CHECK(sp.states().count(LS::Unknown) == 3);
      CHECK(sp.states()(0, 1) == LS::Unknown);
    }
  }
  SUBCASE("each positive is retained with frequency 1/3") {
    BinaryMatrix t(10000, 4);
    for (Index i = 0; i < t.rows(); ++i) t.row(i) << 1, 0, 1, 1;
    auto const sp = make_single_positive(full_from_truth(t), 2024);
    for (Index k : {0, 2, 3}) {
      Index kept = 0;
      for (Index i = 0; i < t.rows(); ++i) kept += sp.states()(i, k) == LS::ObservedPositive;
      CHECK(std::abs(static_cast<Real>(kept) / 10000.0 - 1.0 / 3.0) <= 0.02);
    }
  }
  SUBCASE("leaves exactly N observed positives, one per row") {
    auto const sp = make_single_positive(generate_synthetic({300, 5, 8, 0.3, 1.0, 4}), 5);
    CHECK(sp.states().count_observed() == 300);
    CHECK(sp.states().count(LS::ObservedPositive) == 300);
    for (Index i = 0; i < 300; ++i) {
      int row = 0;
      for (Index k = 0; k < 8; ++k) row += sp.states()(i, k) == LS::ObservedPositive;
      CHECK(row == 1);
    }
    sp.check_truth_agreement();
  }
  SUBCASE("a sample without positives is named") {
    BinaryMatrix t(3, 2);
    t << 1, 0, 0, 0, 0, 1;
    try {
      make_single_positive(full_from_truth(t), 1);
      FAIL("expected an error");
    } catch (ContractError const &e) {
      CHECK(std::string(e.what()).find("sample 1") != std::string::npos);
    }
  }
}

TEST_CASE("make_fraction_observed") {
  auto const full = generate_synthetic({10, 3, 10, 0.3, 1.0, 2});
  CHECK(make_fraction_observed(full, 1.0, 1).states() == full.states());
  CHECK(make_fraction_observed(full, 0.25, 1).states().count_observed() == 25);
  auto const big = generate_synthetic({100, 3, 50, 0.3, 1.0, 2});
  auto const part = make_fraction_observed(big, 0.01, 9);
  CHECK(part.states().count_observed() == 50);
  part.check_truth_agreement();
  CHECK(part == make_fraction_observed(big, 0.01, 9));
  CHECK_THROWS_AS(make_fraction_observed(full, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(make_fraction_observed(full, 1.5, 1), ConfigError);
}

TEST_CASE("subsample") {
  auto const ds = generate_synthetic({100, 3, 4, 0.3, 1.0, 3});
  CHECK(subsample(ds, 1.0, 5) == ds);
  auto const tenth = subsample(ds, 0.1, 5);
  CHECK(tenth.size() == 10);
  CHECK(subsample_rows(100, 0.1, 5) == subsample_rows(100, 0.1, 5));
  auto const rows = subsample_rows(100, 0.1, 5);
  CHECK(std::is_sorted(rows.begin(), rows.end()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    CHECK(tenth.features().row(static_cast<Index>(j)) == ds.features().row(rows[j]));
  CHECK_THROWS_AS(subsample(ds, 0.001, 5), ConfigError);
}

TEST_CASE("dataset text round trip") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    auto const ds = random_dataset(rng);
    auto const back = roundtrip(ds);
    CHECK(back == ds);
    CHECK(an_targets(back.states()) == an_targets(ds.states()));
  }
}

TEST_CASE("dataset parse errors carry line numbers") {
  CHECK(parse_error_line("WSML/1\n3 2 4\n0 0\n0 0\n") == 5);
  CHECK(parse_error_line("WSML/1\n3 2 4\n0 0\n0 0\n1 0 u 0\n") == 5);
  CHECK(parse_error_line("WSML/2\n1 1 2\n0\n1 0\n") == 1);
  CHECK(parse_error_line("WSML/1\n1 1 1\n0\n1\n") == 2);
  CHECK(parse_error_line("WSML/1\n1 1 2\nnan\n1 0\n") == 3);
  CHECK(parse_error_line("WSML/1\n1 1 2\n0\n1 0\nTRUTH\n1 u\n") == 6);
  CHECK(parse_error_line("WSML/1\n1 1 2\n0\n1 0\nbogus\n") == 5);

  std::istringstream in("WSML/1\n1 1 2\n0\n1 2\n");
  try {
    read_dataset(in);
    FAIL("expected a parse error");
  } catch (ParseError const &e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("'2'") != std::string::npos);
  }
}

TEST_CASE("comment lines are skipped") {
  std::istringstream in("# note\nWSML/1\n1 1 2\n0.5\n# mid\n1 u\n#cfg {}\n");
  auto const ds = read_dataset(in);
  CHECK(ds.features()(0, 0) == 0.5);
  CHECK(ds.states()(0, 1) == LS::Unknown);
  CHECK_FALSE(ds.has_truth());
}
