#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgflow/dataset.hpp"
#include "cgflow/effects.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/trainer.hpp"

namespace cgflow {

// --- abduction / action / prediction -----------------------------------------

// Recovers the unit's exogenous noise z = T(x) from its observed
// (model-space) evidence.
inline std::vector<double> abduct(const TrainedModel& model, const std::vector<double>& x) {
  return model.flow.transform(x).first;
}

// Re-propagates recovered noise through the model with the treatment
// pinned: incoming edges of the treatment are irrelevant because its
// coordinate is never solved, which is the graph mutilation.
inline std::vector<double> predict_under(const TrainedModel& model, const std::vector<double>& z,
                                         const std::string& treatment, double value) {
  return model.flow.inverse(z, {{treatment, value}});
}

namespace detail {

struct QueryColumns {
  std::size_t treatment;
  std::size_t outcome;

  static QueryColumns from(const TrainedModel& model) {
    QueryColumns q{};
    std::optional<std::size_t> t, y;
    for (std::size_t j = 0; j < model.columns.size(); ++j) {
      if (model.columns[j].role == NodeRole::Treatment) {
        if (t) throw ConfigError("more than one treatment column");
        t = j;
      }
      if (model.columns[j].role == NodeRole::Outcome) {
        if (y) throw ConfigError("more than one outcome column");
        y = j;
      }
    }
    if (!t) throw MissingObservedTreatment("model has no treatment column");
    if (!y) throw ConfigError("model has no outcome column");
    q.treatment = *t;
    q.outcome = *y;
    return q;
  }
};

// Model-space clamp for requesting treatment level `a` on a unit whose
// observed coordinate is `observed`. When the request matches the unit's
// observed level the world is left exactly as observed, which makes
// consistency hold identically rather than up to root tolerance.
inline double resolve_clamp(const ColumnSpec& treat_col, double observed, double a) {
  if (treat_col.discrete) {
    if (quantize_one(observed, treat_col.cardinality) == quantize_one(a, treat_col.cardinality))
      return observed;
    return a;
  }
  return observed == a ? observed : a;
}

inline double finish_outcome(const ColumnSpec& outcome_col, double y) {
  return outcome_col.discrete ? quantize_one(y, outcome_col.cardinality) : y;
}

}  // namespace detail

// Potential-outcome matrix for a whole unit table under one requested
// treatment level (clamp resolved per unit). Rows keep their observed
// values on every non-descendant of the treatment.
inline Tensor potential_units(const TrainedModel& model, const Dataset& units, double a) {
  if (units.rows() == 0) throw EmptyUnits("no units");
  const auto q = detail::QueryColumns::from(model);
  const Tensor z = model.flow.transform_batch(units.values).z;
  Tensor clamp(units.rows(), 1);
  for (std::size_t u = 0; u < units.rows(); ++u)
    clamp(u, 0) = detail::resolve_clamp(model.columns[q.treatment], units.values(u, q.treatment), a);
  return model.flow.repropagate_batch(units.values, z, q.treatment, clamp);
}

// Per-unit potential outcomes (outcome coordinate only, quantized for a
// discrete outcome).
inline std::vector<double> potential_outcomes(const TrainedModel& model, const Dataset& units,
                                              double a) {
  const auto q = detail::QueryColumns::from(model);
  const Tensor x = potential_units(model, units, a);
  std::vector<double> out(units.rows());
  for (std::size_t u = 0; u < units.rows(); ++u)
    out[u] = detail::finish_outcome(model.columns[q.outcome], x(u, q.outcome));
  return out;
}

// Same but with a per-unit clamp column already resolved (used for
// strategy evaluation where every unit may get a different treatment).
inline std::vector<double> potential_outcomes_resolved(const TrainedModel& model,
                                                       const Dataset& units,
                                                       const std::vector<double>& resolved) {
  if (units.rows() == 0) throw EmptyUnits("no units");
  const auto q = detail::QueryColumns::from(model);
  const Tensor z = model.flow.transform_batch(units.values).z;
  Tensor clamp(units.rows(), 1);
  for (std::size_t u = 0; u < units.rows(); ++u) clamp(u, 0) = resolved[u];
  const Tensor x = model.flow.repropagate_batch(units.values, z, q.treatment, clamp);
  std::vector<double> out(units.rows());
  for (std::size_t u = 0; u < units.rows(); ++u)
    out[u] = detail::finish_outcome(model.columns[q.outcome], x(u, q.outcome));
  return out;
}

// First-Law composition for a single unit: abduction, treatment clamp,
// prediction, outcome read-off.
inline double counterfactual_outcome(const TrainedModel& model, const std::vector<double>& x,
                                     double a) {
  Dataset one;
  one.columns = model.columns;
  one.values = Tensor(1, x.size());
  for (std::size_t j = 0; j < x.size(); ++j) one.values(0, j) = x[j];
  one.dequantized = true;
  return potential_outcomes(model, one, a).front();
}

// --- effect estimators --------------------------------------------------------

// Plain:        y(a1) - y(a0)
// Thresholded:  1(y(a1) > cut) - 1(y(a0) > cut)
inline EffectEstimate estimate_ice(const TrainedModel& model, const std::vector<double>& x,
                                   double a1, double a0, bool thresholded = false,
                                   double cut = 1.0) {
  const double y1 = counterfactual_outcome(model, x, a1);
  const double y0 = counterfactual_outcome(model, x, a0);
  EffectEstimate est;
  est.n_units = 1;
  est.std_error = 0.0;
  est.estimate = thresholded ? (y1 > cut ? 1.0 : 0.0) - (y0 > cut ? 1.0 : 0.0) : y1 - y0;
  return est;
}

namespace detail {
inline std::vector<double> unit_effects(const TrainedModel& model, const Dataset& units,
                                        double a1, double a0) {
  const auto y1 = potential_outcomes(model, units, a1);
  const auto y0 = potential_outcomes(model, units, a0);
  std::vector<double> ice(y1.size());
  for (std::size_t u = 0; u < y1.size(); ++u) ice[u] = y1[u] - y0[u];
  return ice;
}
}  // namespace detail

// Mean per-unit effect over the empirical abducted-noise distribution
// (one noise vector per observed unit).
inline EffectEstimate estimate_ace(const TrainedModel& model, const Dataset& units, double a1,
                                   double a0, std::uint64_t seed = 0) {
  if (units.rows() == 0) throw EmptyUnits("ACE needs at least one unit");
  const auto ice = detail::unit_effects(model, units, a1, a0);
  EffectEstimate est;
  est.n_units = ice.size();
  est.seed = seed;
  double mean = 0.0;
  for (double v : ice) mean += v;
  mean /= static_cast<double>(ice.size());
  est.estimate = mean;
  if (ice.size() > 1) {
    double ss = 0.0;
    for (double v : ice) ss += (v - mean) * (v - mean);
    est.std_error = std::sqrt(ss / static_cast<double>(ice.size() - 1) /
                              static_cast<double>(ice.size()));
  } else {
    est.std_error = std::nullopt;
  }
  return est;
}

// Per-group mean effect keyed by the units' group value. Groups with a
// single unit report no standard error.
inline std::map<long long, EffectEstimate> estimate_cace(const TrainedModel& model,
                                                         const Dataset& units, double a1,
                                                         double a0) {
  if (units.rows() == 0) throw EmptyUnits("CACE needs at least one unit");
  if (units.group.size() != units.rows())
    throw MissingGroupKey("units carry no group key");
  const auto ice = detail::unit_effects(model, units, a1, a0);
  std::map<long long, std::vector<double>> per_group;
  for (std::size_t u = 0; u < ice.size(); ++u) per_group[units.group[u]].push_back(ice[u]);
  std::map<long long, EffectEstimate> out;
  for (const auto& [g, values] : per_group) {
    EffectEstimate est;
    est.n_units = values.size();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    est.estimate = mean;
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      est.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) /
                                static_cast<double>(values.size()));
    } else {
      est.std_error = std::nullopt;
    }
    out.emplace(g, est);
  }
  return out;
}

// Interventional mean outcome by redrawing base noise (sampling the
// mutilated model) instead of abducting observed units.
inline EffectEstimate interventional_ace(const TrainedModel& model, double a1, double a0,
                                         std::size_t n_draws, std::uint64_t seed) {
  const auto q = detail::QueryColumns::from(model);
  ClampMap c1, c0;
  c1.emplace(q.treatment, Tensor::scalar(a1));
  c0.emplace(q.treatment, Tensor::scalar(a0));
  const Tensor x1 = model.flow.sample(n_draws, seed, c1);
  const Tensor x0 = model.flow.sample(n_draws, seed, c0);
  EffectEstimate est;
  est.n_units = n_draws;
  est.n_noise_draws = n_draws;
  est.seed = seed;
  std::vector<double> diff(n_draws);
  for (std::size_t u = 0; u < n_draws; ++u)
    diff[u] = detail::finish_outcome(model.columns[q.outcome], x1(u, q.outcome)) -
              detail::finish_outcome(model.columns[q.outcome], x0(u, q.outcome));
  double mean = 0.0;
  for (double v : diff) mean += v;
  mean /= static_cast<double>(n_draws);
  est.estimate = mean;
  double ss = 0.0;
  for (double v : diff) ss += (v - mean) * (v - mean);
  est.std_error =
      std::sqrt(ss / static_cast<double>(n_draws - 1) / static_cast<double>(n_draws));
  return est;
}

// --- treatment strategies -------------------------------------------------------

enum class StrategyKind { TS0, TS1, TSOb, TSC, TSI, TSIt };

inline std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::TS0: return "TS0";
    case StrategyKind::TS1: return "TS1";
    case StrategyKind::TSOb: return "TSOb";
    case StrategyKind::TSC: return "TSC";
    case StrategyKind::TSI: return "TSI";
    case StrategyKind::TSIt: return "TSIt";
  }
  return "?";
}

inline StrategyKind strategy_from_name(const std::string& s) {
  if (s == "TS0") return StrategyKind::TS0;
  if (s == "TS1") return StrategyKind::TS1;
  if (s == "TSOb") return StrategyKind::TSOb;
  if (s == "TSC") return StrategyKind::TSC;
  if (s == "TSI") return StrategyKind::TSI;
  if (s == "TSIt") return StrategyKind::TSIt;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct TreatmentStrategy {
  StrategyKind kind = StrategyKind::TSI;
  double epsilon = 0.05;        // |effect| <= epsilon counts as neutral
  bool lower_is_better = true;  // poverty-style outcome direction
  double threshold_cut = 1.0;   // indicator cut for the thresholded rule
};

enum class Decision { Encourage, Discourage, Neutral };

struct Assignment {
  Decision decision = Decision::Neutral;
  double resolved_treatment = 0.0;  // model-space clamp used for evaluation
};

struct AdvisabilitySummary {
  double encouraged_pct = 0.0;
  double discouraged_pct = 0.0;
  double neutral_pct = 0.0;
};

struct StrategyAssignment {
  std::vector<Assignment> per_unit;
  AdvisabilitySummary summary;
};

namespace detail {
// Encourage when the effect improves the outcome beyond the neutrality
// band; "improves" depends on the outcome direction.
inline Decision decide(double effect, double epsilon, bool lower_is_better) {
  const double signed_effect = lower_is_better ? effect : -effect;
  if (signed_effect < -epsilon) return Decision::Encourage;
  if (signed_effect > epsilon) return Decision::Discourage;
  return Decision::Neutral;
}
}  // namespace detail

inline StrategyAssignment assign_strategy(const TrainedModel& model, const Dataset& units,
                                          const TreatmentStrategy& strategy, double a1 = 1.0,
                                          double a0 = 0.0) {
  if (units.rows() == 0) throw EmptyUnits("no units to assign");
  const auto q = detail::QueryColumns::from(model);
  const ColumnSpec& tcol = model.columns[q.treatment];

  StrategyAssignment out;
  out.per_unit.resize(units.rows());

  auto observed = [&](std::size_t u) { return units.values(u, q.treatment); };
  auto observed_level = [&](std::size_t u) {
    return tcol.discrete ? quantize_one(observed(u), tcol.cardinality) : observed(u);
  };

  switch (strategy.kind) {
    case StrategyKind::TS0:
      for (std::size_t u = 0; u < units.rows(); ++u)
        out.per_unit[u] = {Decision::Discourage, detail::resolve_clamp(tcol, observed(u), a0)};
      break;
    case StrategyKind::TS1:
      for (std::size_t u = 0; u < units.rows(); ++u)
        out.per_unit[u] = {Decision::Encourage, detail::resolve_clamp(tcol, observed(u), a1)};
      break;
    case StrategyKind::TSOb:
      for (std::size_t u = 0; u < units.rows(); ++u) {
        const Decision d = observed_level(u) == a1 ? Decision::Encourage : Decision::Discourage;
        out.per_unit[u] = {d, observed(u)};
      }
      break;
    case StrategyKind::TSC: {
      if (units.group.size() != units.rows())
        throw MissingGroupKey("strategy TSC needs a group key");
      const auto cace = estimate_cace(model, units, a1, a0);
      for (std::size_t u = 0; u < units.rows(); ++u) {
        const Decision d = detail::decide(cace.at(units.group[u]).estimate, strategy.epsilon,
                                          strategy.lower_is_better);
        const double clamp = d == Decision::Encourage
                                 ? detail::resolve_clamp(tcol, observed(u), a1)
                                 : d == Decision::Discourage
                                       ? detail::resolve_clamp(tcol, observed(u), a0)
                                       : observed(u);
        out.per_unit[u] = {d, clamp};
      }
      break;
    }
    case StrategyKind::TSI:
    case StrategyKind::TSIt: {
      const auto y1 = potential_outcomes(model, units, a1);
      const auto y0 = potential_outcomes(model, units, a0);
      for (std::size_t u = 0; u < units.rows(); ++u) {
        const double effect =
            strategy.kind == StrategyKind::TSI
                ? y1[u] - y0[u]
                : (y1[u] > strategy.threshold_cut ? 1.0 : 0.0) -
                      (y0[u] > strategy.threshold_cut ? 1.0 : 0.0);
        const Decision d = detail::decide(effect, strategy.epsilon, strategy.lower_is_better);
        const double clamp = d == Decision::Encourage
                                 ? detail::resolve_clamp(tcol, observed(u), a1)
                                 : d == Decision::Discourage
                                       ? detail::resolve_clamp(tcol, observed(u), a0)
                                       : observed(u);
        out.per_unit[u] = {d, clamp};
      }
      break;
    }
  }

  double e = 0, dd = 0, nn = 0;
  for (const auto& a : out.per_unit) {
    if (a.decision == Decision::Encourage) ++e;
    if (a.decision == Decision::Discourage) ++dd;
    if (a.decision == Decision::Neutral) ++nn;
  }
  const double total = static_cast<double>(out.per_unit.size());
  out.summary = {100.0 * e / total, 100.0 * dd / total, 100.0 * nn / total};
  return out;
}

struct StrategyEvaluation {
  std::vector<double> outcomes;       // per-unit potential outcome
  double mean_outcome = 0.0;
  std::vector<std::size_t> histogram;  // per degree, discrete outcomes only
};

// Computes each unit's potential outcome under its resolved treatment.
inline StrategyEvaluation evaluate_strategy(const TrainedModel& model, const Dataset& units,
                                            const StrategyAssignment& assignment) {
  if (assignment.per_unit.size() != units.rows())
    throw DimensionMismatch("one assignment per unit required");
  const auto q = detail::QueryColumns::from(model);
  std::vector<double> resolved(units.rows());
  for (std::size_t u = 0; u < units.rows(); ++u)
    resolved[u] = assignment.per_unit[u].resolved_treatment;
  StrategyEvaluation ev;
  ev.outcomes = potential_outcomes_resolved(model, units, resolved);
  for (double y : ev.outcomes) ev.mean_outcome += y;
  ev.mean_outcome /= static_cast<double>(ev.outcomes.size());
  const ColumnSpec& ycol = model.columns[q.outcome];
  if (ycol.discrete) {
    ev.histogram.assign(ycol.cardinality, 0);
    for (double y : ev.outcomes) ev.histogram[static_cast<std::size_t>(y)] += 1;
  }
  return ev;
}

}  // namespace cgflow
