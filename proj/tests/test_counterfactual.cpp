#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cgflow/counterfactual.hpp"

#include "helpers.hpp"

using namespace cgflow;

namespace {

FlowConfig bare_config() {
  FlowConfig cfg;
  cfg.conditioner_hidden = {};
  cfg.transformer_hidden = {};
  cfg.context_width = 1;
  cfg.quadrature_nodes = 8;
  cfg.positivity_delta = 0.0;
  return cfg;
}

// Two-node flow A -> Y with tau_Y(y) = y + shift * A and tau_A identity,
// so the potential outcome under do(A=a) is exactly z_Y - shift * a and
// every unit's effect of moving a0 -> a1 is -shift * (a1 - a0).
TrainedModel shift_model(double shift, bool discrete_outcome = true) {
  Rng rng(1);
  TrainedModel m;
  m.flow = FlowModel(parse_dag("A; Y; A->Y"), bare_config(), rng);
  m.flow.visit_params([](Tensor& t) { t.fill(0.0); });
  m.flow.conditioner(1).weight(0)(0, 0) = 1.0;  // h_Y = x_A
  m.flow.offset(1).weight(0)(0, 0) = shift;     // beta_Y = shift * x_A
  m.columns = {{"A", true, 2, NodeRole::Treatment, false},
               {"Y", discrete_outcome, 8, NodeRole::Outcome, false}};
  return m;
}

// Identity flow over the four-node graph; every counterfactual equals the
// observation.
TrainedModel identity_model() {
  Rng rng(1);
  TrainedModel m;
  FlowConfig cfg = bare_config();
  cfg.conditioner_hidden = {4};
  cfg.context_width = 2;
  m.flow = FlowModel(parse_dag("O; C; A; Y; C->A; C->Y; A->Y; O->Y"), cfg, rng);
  m.flow.visit_params([](Tensor& t) { t.fill(0.0); });
  m.columns = {{"O", false, 0, NodeRole::OtherCause, false},
               {"C", true, 4, NodeRole::Confounder, true},
               {"A", true, 2, NodeRole::Treatment, false},
               {"Y", true, 8, NodeRole::Outcome, false}};
  return m;
}

Dataset units_for(const TrainedModel& m, const std::vector<std::vector<double>>& rows) {
  Dataset ds;
  ds.columns = m.columns;
  ds.values = Tensor(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < rows[r].size(); ++j) ds.values(r, j) = rows[r][j];
  ds.dequantized = true;
  const auto g = ds.group_index();
  if (g) {
    for (std::size_t r = 0; r < ds.rows(); ++r)
      ds.group.push_back(static_cast<long long>(std::llround(ds.values(r, *g))));
  }
  return ds;
}

}  // namespace

TEST_CASE("abduction through the identity flow returns the unit") {
  const TrainedModel m = identity_model();
  const std::vector<double> x{0.5, 1.0, 1.0, 3.0};
  const auto z = abduct(m, x);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(z[i] == Catch::Approx(x[i]).margin(1e-12));
}

TEST_CASE("abduction round trip and injectivity on a random model") {
  Rng rng(4);
  FlowConfig cfg;
  cfg.conditioner_hidden = {8, 6};
  cfg.transformer_hidden = {6, 4};
  cfg.context_width = 4;
  cfg.quadrature_nodes = 20;
  TrainedModel m;
  m.flow = FlowModel(parse_dag("O; C; A; Y; C->A; C->Y; A->Y; O->Y"), cfg, rng);
  m.columns = {{"O", false, 0, NodeRole::OtherCause, false},
               {"C", false, 0, NodeRole::Confounder, false},
               {"A", false, 0, NodeRole::Treatment, false},
               {"Y", false, 0, NodeRole::Outcome, false}};
  Rng drng(6);
  std::vector<double> prev_z;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(4);
    for (auto& v : x) v = drng.normal();
    const auto z = abduct(m, x);
    const auto back = m.flow.inverse(z);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(back[i] - x[i]) < 1e-6);
    if (!prev_z.empty()) {
      double dist = 0.0;
      for (std::size_t i = 0; i < 4; ++i) dist += std::abs(z[i] - prev_z[i]);
      REQUIRE(dist > 1e-8);
    }
    prev_z = z;
  }
}

TEST_CASE("prediction under the observed treatment reproduces the unit") {
  const TrainedModel m = shift_model(5.0);
  const std::vector<double> x{0.0, 7.0};
  const auto z = abduct(m, x);
  const auto back = predict_under(m, z, "A", 0.0);
  REQUIRE(back[0] == 0.0);
  REQUIRE(std::abs(back[1] - 7.0) < 1e-6);
}

TEST_CASE("treatment with no path to the outcome leaves it untouched") {
  Rng rng(2);
  TrainedModel m;
  FlowConfig cfg = bare_config();
  m.flow = FlowModel(parse_dag("A; Y;"), cfg, rng);  // no edges
  m.columns = {{"A", true, 2, NodeRole::Treatment, false},
               {"Y", true, 8, NodeRole::Outcome, false}};
  const std::vector<double> x{1.0, 5.0};
  REQUIRE(counterfactual_outcome(m, x, 0.0) == counterfactual_outcome(m, x, 1.0));
  REQUIRE(counterfactual_outcome(m, x, 0.0) == 5.0);
}

TEST_CASE("non-descendants are bit-identical across clamp values") {
  const TrainedModel m = identity_model();
  const Dataset units = units_for(m, {{0.51, 2.0, 1.0, 3.0}, {-0.25, 1.0, 0.0, 6.0}});
  const Tensor w1 = potential_units(m, units, 1.0);
  const Tensor w0 = potential_units(m, units, 0.0);
  for (std::size_t u = 0; u < units.rows(); ++u) {
    REQUIRE(w1(u, 0) == w0(u, 0));  // O
    REQUIRE(w1(u, 1) == w0(u, 1));  // C
    REQUIRE(w1(u, 0) == units.values(u, 0));
    REQUIRE(w1(u, 1) == units.values(u, 1));
  }
}

TEST_CASE("first-law composition gives the linear oracle effect exactly") {
  const TrainedModel m = shift_model(5.0);
  // unit observed untreated with outcome degree 7
  const std::vector<double> x{0.0, 7.0};
  REQUIRE(counterfactual_outcome(m, x, 0.0) == 7.0);  // consistency
  REQUIRE(counterfactual_outcome(m, x, 1.0) == 2.0);  // do(A=1): 7 - 5

  const auto plain = estimate_ice(m, x, 1.0, 0.0, false);
  const auto thresh = estimate_ice(m, x, 1.0, 0.0, true);
  REQUIRE(plain.estimate == -5.0);
  REQUIRE(thresh.estimate == 0.0);  // both degrees above the poverty cut
  REQUIRE(*plain.std_error == 0.0);
}

TEST_CASE("threshold crossing shows up only in the thresholded effect") {
  const TrainedModel m = shift_model(1.0);
  const std::vector<double> x{0.0, 2.0};
  const auto plain = estimate_ice(m, x, 1.0, 0.0, false);
  const auto thresh = estimate_ice(m, x, 1.0, 0.0, true);
  REQUIRE(plain.estimate == -1.0);   // 1 - 2
  REQUIRE(thresh.estimate == -1.0);  // crosses the cut: 0 - 1
}

TEST_CASE("identical interventions have zero effect") {
  const TrainedModel m = shift_model(5.0);
  const std::vector<double> x{1.0, 4.0};
  REQUIRE(estimate_ice(m, x, 1.0, 1.0, false).estimate == 0.0);
  REQUIRE(estimate_ice(m, x, 1.0, 1.0, true).estimate == 0.0);
}

TEST_CASE("ace equals the unit average of ice exactly") {
  const TrainedModel m = shift_model(2.0, false);
  const Dataset units = units_for(m, {{0.0, 3.0}, {1.0, 4.5}, {0.0, 6.25}, {1.0, 1.0}});
  const auto ace = estimate_ace(m, units, 1.0, 0.0);
  double mean = 0.0;
  for (std::size_t u = 0; u < units.rows(); ++u) {
    std::vector<double> x{units.values(u, 0), units.values(u, 1)};
    mean += estimate_ice(m, x, 1.0, 0.0, false).estimate;
  }
  mean /= 4.0;
  REQUIRE(ace.estimate == Catch::Approx(mean).margin(1e-9));
  REQUIRE(ace.n_units == 4);

  const auto zero = estimate_ace(m, units, 1.0, 1.0);
  REQUIRE(zero.estimate == 0.0);
  REQUIRE_THROWS_AS(estimate_ace(m, Dataset{}, 1.0, 0.0), EmptyUnits);
}

TEST_CASE("cace grouping mechanics") {
  const TrainedModel m = identity_model();
  const Dataset units = units_for(m, {{0.1, 0.0, 1.0, 3.0},
                                      {0.2, 0.0, 0.0, 4.0},
                                      {0.3, 2.0, 1.0, 5.0},
                                      {0.4, 2.0, 0.0, 6.0},
                                      {0.5, 3.0, 1.0, 2.0}});
  const auto cace = estimate_cace(m, units, 1.0, 0.0);
  REQUIRE(cace.size() == 2 + 1);  // groups 0, 2, 3; nothing for group 1
  REQUIRE(cace.count(1) == 0);
  REQUIRE(cace.at(0).estimate == 0.0);  // identity flow: zero effects
  REQUIRE(cace.at(0).n_units == 2);
  REQUIRE(cace.at(0).std_error.has_value());
  REQUIRE_FALSE(cace.at(3).std_error.has_value());  // single unit

  // all units in one group: cace equals ace
  Dataset one = units;
  for (auto& g : one.group) g = 7;
  const auto single = estimate_cace(m, one, 1.0, 0.0);
  const auto ace = estimate_ace(m, one, 1.0, 0.0);
  REQUIRE(single.size() == 1);
  REQUIRE(single.at(7).estimate == ace.estimate);

  Dataset nogroup = units;
  nogroup.group.clear();
  REQUIRE_THROWS_AS(estimate_cace(m, nogroup, 1.0, 0.0), MissingGroupKey);
}

TEST_CASE("fixed strategies assign everyone the same decision") {
  const TrainedModel m = shift_model(5.0);
  const Dataset units = units_for(m, {{0.0, 7.0}, {1.0, 2.0}, {0.0, 6.0}});
  TreatmentStrategy ts;
  ts.kind = StrategyKind::TS0;
  const auto all0 = assign_strategy(m, units, ts);
  REQUIRE(all0.summary.discouraged_pct == 100.0);
  for (const auto& a : all0.per_unit) REQUIRE(a.decision == Decision::Discourage);
  ts.kind = StrategyKind::TS1;
  const auto all1 = assign_strategy(m, units, ts);
  REQUIRE(all1.summary.encouraged_pct == 100.0);
}

TEST_CASE("observed strategy reproduces the observed world") {
  const TrainedModel m = shift_model(5.0);
  const Dataset units = units_for(m, {{0.0, 7.0}, {1.0, 2.0}, {0.0, 6.0}, {1.0, 1.0}});
  TreatmentStrategy ts;
  ts.kind = StrategyKind::TSOb;
  const auto assign = assign_strategy(m, units, ts);
  REQUIRE(assign.per_unit[0].decision == Decision::Discourage);
  REQUIRE(assign.per_unit[1].decision == Decision::Encourage);
  const auto eval = evaluate_strategy(m, units, assign);
  // histogram identical to the observed outcome histogram
  std::vector<std::size_t> observed(8, 0);
  for (std::size_t u = 0; u < units.rows(); ++u)
    observed[static_cast<std::size_t>(units.values(u, 1))] += 1;
  REQUIRE(eval.histogram == observed);
}

TEST_CASE("individual strategy encourages beneficial units and tracks the best arm") {
  const TrainedModel m = shift_model(5.0);  // treatment lowers the outcome by 5
  const Dataset units = units_for(m, {{0.0, 7.0}, {1.0, 2.0}, {0.0, 6.0}});
  TreatmentStrategy tsi;
  tsi.kind = StrategyKind::TSI;
  tsi.epsilon = 0.1;
  const auto assign = assign_strategy(m, units, tsi);
  for (const auto& a : assign.per_unit) REQUIRE(a.decision == Decision::Encourage);
  const auto eval = evaluate_strategy(m, units, assign);
  TreatmentStrategy ts1;
  ts1.kind = StrategyKind::TS1;
  const auto eval1 = evaluate_strategy(m, units, assign_strategy(m, units, ts1));
  REQUIRE(eval.mean_outcome == eval1.mean_outcome);  // uniform benefit: TSI matches TS1
  TreatmentStrategy ts0;
  ts0.kind = StrategyKind::TS0;
  const auto eval0 = evaluate_strategy(m, units, assign_strategy(m, units, ts0));
  REQUIRE(eval1.mean_outcome < eval0.mean_outcome);
}

TEST_CASE("harmful units get discouraged") {
  const TrainedModel m = shift_model(-5.0);  // treatment raises the outcome by 5
  const Dataset units = units_for(m, {{0.0, 1.0}, {1.0, 6.0}});
  TreatmentStrategy tsi;
  tsi.kind = StrategyKind::TSI;
  tsi.epsilon = 0.1;
  const auto assign = assign_strategy(m, units, tsi);
  for (const auto& a : assign.per_unit) REQUIRE(a.decision == Decision::Discourage);
}

TEST_CASE("zero effects are neutral and resolve to the observed world") {
  const TrainedModel m = identity_model();
  const Dataset units = units_for(m, {{0.1, 1.0, 1.0, 3.0}, {0.2, 2.0, 0.0, 4.0}});
  TreatmentStrategy tsi;
  tsi.kind = StrategyKind::TSI;
  const auto assign = assign_strategy(m, units, tsi);
  REQUIRE(assign.summary.neutral_pct == 100.0);
  for (std::size_t u = 0; u < units.rows(); ++u)
    REQUIRE(assign.per_unit[u].resolved_treatment == units.values(u, 2));
}

TEST_CASE("high-degree improvements look neutral to the thresholded rule") {
  const TrainedModel m = shift_model(5.0);
  const Dataset units = units_for(m, {{0.0, 7.0}});  // potential pair (7, 2)
  TreatmentStrategy tsi;
  tsi.kind = StrategyKind::TSI;
  TreatmentStrategy tsit;
  tsit.kind = StrategyKind::TSIt;
  const auto plain = assign_strategy(m, units, tsi);
  const auto thresh = assign_strategy(m, units, tsit);
  REQUIRE(plain.per_unit[0].decision == Decision::Encourage);
  REQUIRE(thresh.per_unit[0].decision == Decision::Neutral);
}

TEST_CASE("group strategy requires a group key and missing roles are reported") {
  const TrainedModel shift = shift_model(5.0);
  const Dataset units = units_for(shift, {{0.0, 7.0}});
  TreatmentStrategy tsc;
  tsc.kind = StrategyKind::TSC;
  REQUIRE_THROWS_AS(assign_strategy(shift, units, tsc), MissingGroupKey);

  TrainedModel norole = shift_model(5.0);
  norole.columns[0].role = NodeRole::Plain;
  REQUIRE_THROWS_AS(estimate_ace(norole, units, 1.0, 0.0), MissingObservedTreatment);
}

TEST_CASE("group strategy follows the sign of the group effect") {
  const TrainedModel m = shift_model(5.0);
  Dataset units = units_for(m, {{0.0, 7.0}, {1.0, 3.0}, {0.0, 5.0}, {1.0, 6.0}});
  units.group = {0, 0, 1, 1};
  TreatmentStrategy tsc;
  tsc.kind = StrategyKind::TSC;
  tsc.epsilon = 0.1;
  const auto assign = assign_strategy(m, units, tsc);
  for (const auto& a : assign.per_unit) REQUIRE(a.decision == Decision::Encourage);
  const auto eval = evaluate_strategy(m, units, assign);
  REQUIRE(eval.outcomes.size() == 4);
}

TEST_CASE("interventional ace redraws base noise deterministically") {
  const TrainedModel m = shift_model(2.0, false);
  const auto a = interventional_ace(m, 1.0, 0.0, 2000, 3);
  const auto b = interventional_ace(m, 1.0, 0.0, 2000, 3);
  REQUIRE(a.estimate == b.estimate);
  REQUIRE(a.estimate == Catch::Approx(-2.0).margin(1e-6));
  REQUIRE(a.n_noise_draws == 2000);
}
