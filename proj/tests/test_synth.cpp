#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "cgflow/fixtures.hpp"
#include "cgflow/synth.hpp"

#include "helpers.hpp"

using namespace cgflow;

TEST_CASE("expression parsing and evaluation") {
  const auto e = parse_expr("2*A + C + 0.5*O + u");
  Expr::Env env{{"A", 1.0}, {"C", 2.0}, {"O", 4.0}, {"u", -0.5}};
  REQUIRE(e->eval(env) == Catch::Approx(2.0 + 2.0 + 2.0 - 0.5));
  REQUIRE(parse_expr("step(0.2)")->eval({}) == 1.0);
  REQUIRE(parse_expr("step(-0.2)")->eval({}) == 0.0);
  REQUIRE(parse_expr("clamp(9.5, 0, 7)")->eval({}) == 7.0);
  REQUIRE(parse_expr("min(2, 3) + max(2, 3)")->eval({}) == 5.0);
  REQUIRE(parse_expr("-(1 + 2) * 2")->eval({}) == -6.0);
  REQUIRE(parse_expr("floor(3.9)")->eval({}) == 3.0);
  REQUIRE_THROWS_AS(parse_expr("2 +"), ScmParseError);
  REQUIRE_THROWS_AS(parse_expr("foo(1)")->eval({}), ScmParseError);
  REQUIRE_THROWS_AS(parse_expr("min(1)"), ScmParseError);
}

TEST_CASE("affine extraction") {
  const auto lin = parse_expr("2*A + C/2 - 0.5 + u")->affine();
  REQUIRE(lin.has_value());
  REQUIRE(lin->constant == Catch::Approx(-0.5));
  REQUIRE(lin->coeff.at("A") == Catch::Approx(2.0));
  REQUIRE(lin->coeff.at("C") == Catch::Approx(0.5));
  REQUIRE(lin->coeff.at("u") == Catch::Approx(1.0));
  REQUIRE_FALSE(parse_expr("A*C")->affine().has_value());
  REQUIRE_FALSE(parse_expr("step(A)")->affine().has_value());
  REQUIRE_FALSE(parse_expr("1/A")->affine().has_value());
}

TEST_CASE("scm parse errors") {
  REQUIRE_THROWS_AS(SyntheticScm::parse(""), ScmParseError);
  REQUIRE_THROWS_AS(SyntheticScm::parse("A normal(0,1) : u"), ScmParseError);
  REQUIRE_THROWS_AS(SyntheticScm::parse("A ~ normal(0,1)"), ScmParseError);
  REQUIRE_THROWS_AS(SyntheticScm::parse("A ~ normal(0,1) : B + u"), ScmParseError);
  REQUIRE_THROWS_AS(SyntheticScm::parse("A wat ~ normal(0,1) : u"), ScmParseError);
  REQUIRE_THROWS_AS(SyntheticScm::parse("A ~ cauchy(0,1) : u"), ScmParseError);
}

TEST_CASE("scm derives its DAG from the mechanisms") {
  const SyntheticScm scm = fixtures::load("linear");
  REQUIRE(scm.dag().serialize() == "O; C; A; Y; A->Y; C->A; C->Y; O->Y");
  const auto specs = scm.column_specs();
  REQUIRE(specs[2].role == NodeRole::Treatment);
  REQUIRE(specs[3].role == NodeRole::Outcome);
}

TEST_CASE("chain sampling is seed deterministic") {
  const auto scm = SyntheticScm::parse(
      "C ~ normal(0,1) : u\n"
      "A ~ normal(0,1) : C + u\n"
      "Y ~ normal(0,1) : A + u\n");
  const Dataset a = scm.sample(3, 123);
  const Dataset b = scm.sample(3, 123);
  REQUIRE(a.rows() == 3);
  for (std::size_t k = 0; k < a.values.size(); ++k) REQUIRE(a.values[k] == b.values[k]);
  const Dataset c = scm.sample(3, 124);
  bool same = true;
  for (std::size_t k = 0; k < a.values.size(); ++k) same = same && a.values[k] == c.values[k];
  REQUIRE_FALSE(same);
}

TEST_CASE("linear-gaussian sample covariance matches the analytic covariance") {
  // Hand-derived from the fixture equations:
  //   O, C ~ N(0,1); A = 0.8 C + u; Y = 2 A + C + 0.5 O + u
  // Var(A) = 1.64, Cov(A,C) = 0.8, Cov(Y,O) = 0.5, Cov(Y,C) = 2.6,
  // Cov(Y,A) = 4.08, Var(Y) = 4*1.64 + 1 + 0.25 + 1 + 4*0.8 = 12.01
  const SyntheticScm scm = fixtures::load("linear");
  const Dataset ds = scm.sample(100000, 31);
  const std::size_t n = ds.rows();
  auto cov = [&](std::size_t i, std::size_t j) {
    double mi = 0, mj = 0;
    for (std::size_t r = 0; r < n; ++r) {
      mi += ds.values(r, i);
      mj += ds.values(r, j);
    }
    mi /= n;
    mj /= n;
    double s = 0;
    for (std::size_t r = 0; r < n; ++r) s += (ds.values(r, i) - mi) * (ds.values(r, j) - mj);
    return s / (n - 1);
  };
  const std::size_t O = 0, C = 1, A = 2, Y = 3;
  const double expected[4][4] = {{1.0, 0.0, 0.0, 0.5},
                                 {0.0, 1.0, 0.8, 2.6},
                                 {0.0, 0.8, 1.64, 4.08},
                                 {0.5, 2.6, 4.08, 12.01}};
  const std::size_t order[4] = {O, C, A, Y};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      REQUIRE(cov(order[i], order[j]) == Catch::Approx(expected[i][j]).margin(0.05));
}

TEST_CASE("binary scm joint frequencies match hand-enumerated probabilities") {
  // C ~ Bern(0.5); A = C or u_A with P(u_A)=0.3; Y = A and not u_Y, P(u_Y)=0.2
  const auto scm = SyntheticScm::parse(
      "C discrete(2) ~ bernoulli(0.5) : u\n"
      "A discrete(2) ~ bernoulli(0.3) : max(C, u)\n"
      "Y discrete(2) ~ bernoulli(0.2) : A*(1 - u)\n");
  const Dataset ds = scm.sample(100000, 77);
  std::map<std::array<int, 3>, double> freq;
  for (std::size_t r = 0; r < ds.rows(); ++r)
    freq[{static_cast<int>(ds.values(r, 0)), static_cast<int>(ds.values(r, 1)),
          static_cast<int>(ds.values(r, 2))}] += 1.0 / static_cast<double>(ds.rows());
  auto p = [](int c, int a, int y) {
    const double pc = c ? 0.5 : 0.5;
    const double pa = c ? (a ? 1.0 : 0.0) : (a ? 0.3 : 0.7);
    const double py = a ? (y ? 0.8 : 0.2) : (y ? 0.0 : 1.0);
    return pc * pa * py;
  };
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < 2; ++a)
      for (int y = 0; y < 2; ++y)
        REQUIRE(freq[{c, a, y}] == Catch::Approx(p(c, a, y)).margin(0.01));
}

TEST_CASE("closed-form oracle on the linear fixture") {
  const SyntheticScm scm = fixtures::load("linear");
  const auto fx = oracle_effects(scm, "A", "Y", 1.0, 0.0);
  REQUIRE(fx.method == "closed-form");
  REQUIRE(fx.ace == 2.0);
  REQUIRE(fx.ice_constant.has_value());
  REQUIRE(*fx.ice_constant == 2.0);
}

TEST_CASE("interaction oracle recovers heterogeneous group effects") {
  const SyntheticScm scm = fixtures::load("interaction");
  const auto fx = oracle_effects(scm, "A", "Y", 1.0, 0.0, std::string("C"), 100000, 5);
  REQUIRE(fx.method == "monte-carlo");
  REQUIRE(fx.ace == Catch::Approx(0.5).margin(0.01));
  REQUIRE(fx.cace.at(0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(fx.cace.at(1) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("enumeration oracle on an all-finite system") {
  // A ~ Bern(0.4); Y = A * u with u ~ Bern(0.5): E[Y1] = 0.5, E[Y0] = 0
  const auto scm = SyntheticScm::parse(
      "A discrete(2) ~ bernoulli(0.4) : u\n"
      "Y discrete(2) ~ bernoulli(0.5) : A*u\n");
  const auto fx = oracle_effects(scm, "A", "Y", 1.0, 0.0);
  REQUIRE(fx.method == "enumeration");
  REQUIRE(fx.ace == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("no directed path means zero effect") {
  const auto scm = SyntheticScm::parse(
      "A ~ normal(0,1) : u\n"
      "Y ~ normal(0,1) : u\n");
  const auto fx = oracle_effects(scm, "A", "Y", 1.0, 0.0);
  REQUIRE(fx.method == "closed-form");
  REQUIRE(fx.ace == 0.0);
}

TEST_CASE("propagate clamp equals mutilated-mechanism sampling bit for bit") {
  const SyntheticScm scm = fixtures::load("interaction");
  const auto cut = SyntheticScm::parse(
      "C discrete(2) role=confounder group  ~ bernoulli(0.5) : u\n"
      "A discrete(2) role=treatment         ~ normal(0, 1) : 1\n"
      "Y role=outcome                       ~ normal(0, 1) : A*C + u\n");
  const Dataset a = scm.sample_interventional("A", 1.0, 500, 9);
  const Dataset b = cut.sample(500, 9);
  for (std::size_t k = 0; k < a.values.size(); ++k) REQUIRE(a.values[k] == b.values[k]);
}

TEST_CASE("discretization is applied last and stays in range") {
  const SyntheticScm scm = fixtures::load("poverty");
  const Dataset ds = scm.sample(2000, 4);
  const std::size_t yi = scm.index_of("Y");
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const double y = ds.values(r, yi);
    REQUIRE(std::floor(y) == y);
    REQUIRE(y >= 0.0);
    REQUIRE(y <= 7.0);
  }
}

TEST_CASE("backdoor adjustment agrees with the oracle on sampled data") {
  const SyntheticScm scm = fixtures::load("interaction");
  const Dataset ds = scm.sample(100000, 13);
  const auto est = backdoor_ace(ds, scm.dag(), 1.0, 0.0);
  REQUIRE(est.std_error.has_value());
  REQUIRE(std::abs(est.estimate - 0.5) < 2.0 * *est.std_error + 1e-9);
}

TEST_CASE("randomized treatment reduces backdoor to difference in means") {
  const auto scm = SyntheticScm::parse(
      "A discrete(2) role=treatment ~ bernoulli(0.5) : u\n"
      "Y role=outcome               ~ normal(0,1) : 1.5*A + u\n");
  const Dataset ds = scm.sample(5000, 21);
  const auto est = backdoor_ace(ds, scm.dag(), 1.0, 0.0);
  double s1 = 0, s0 = 0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (ds.values(r, 0) == 1.0) {
      s1 += ds.values(r, 1);
      ++n1;
    } else {
      s0 += ds.values(r, 1);
      ++n0;
    }
  }
  REQUIRE(est.estimate == s1 / n1 - s0 / n0);
}

TEST_CASE("positivity violations are reported with the stratum") {
  Dataset ds;
  ds.columns = {{"C", true, 2, NodeRole::Confounder, false},
                {"A", true, 2, NodeRole::Treatment, false},
                {"Y", false, 0, NodeRole::Outcome, false}};
  ds.values = Tensor(4, 3);
  // stratum C=1 has only treated units
  const double rows[4][3] = {{0, 0, 1.0}, {0, 1, 2.0}, {1, 1, 3.0}, {1, 1, 4.0}};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 3; ++j) ds.values(r, j) = rows[r][j];
  const CausalDag dag = parse_dag("C; A; Y; C->A; C->Y; A->Y");
  REQUIRE_THROWS_WITH(backdoor_ace(ds, dag, 1.0, 0.0),
                      Catch::Matchers::ContainsSubstring("C=1"));
}

TEST_CASE("oracle cross-validation: enumeration and monte-carlo agree") {
  const auto text =
      "C discrete(2) ~ bernoulli(0.5) : u\n"
      "A discrete(2) ~ bernoulli(0.25) : max(C, u)\n"
      "Y discrete(3) ~ bernoulli(0.5) : A + C*u\n";
  const auto scm = SyntheticScm::parse(text);
  const auto exact = oracle_effects(scm, "A", "Y", 1.0, 0.0);
  REQUIRE(exact.method == "enumeration");
  // force the Monte-Carlo path with a tiny enumeration budget
  const auto mc = oracle_effects(scm, "A", "Y", 1.0, 0.0, std::nullopt, 200000, 3, 2);
  REQUIRE(mc.method == "monte-carlo");
  const double se = std::max(*mc.ace_std_error, 1e-9);
  REQUIRE(std::abs(mc.ace - exact.ace) < 3.0 * se + 1e-6);
}
