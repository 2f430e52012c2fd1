#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgflow/counterfactual.hpp"
#include "cgflow/dataset.hpp"
#include "cgflow/fixtures.hpp"
#include "cgflow/report.hpp"
#include "cgflow/synth.hpp"
#include "cgflow/trainer.hpp"

namespace cgflow {

// Everything a batch run needs: input paths, training hyperparameters,
// the seed list, and the causal query settings.
struct RunConfig {
  std::string dag_path;
  std::string data_path;
  std::string columns_path;
  std::string model_dir;
  std::string output_dir;

  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::uint64_t data_seed = 1;  // shared across model seeds

  double a1 = 1.0;
  double a0 = 0.0;
  double epsilon = 0.05;
  bool lower_is_better = true;
  double threshold_cut = 1.0;
  std::vector<std::string> strategies = {"TS0", "TS1", "TSOb", "TSC", "TSI", "TSIt"};
  std::string ace_mode = "abduction";  // or "interventional"
  std::size_t interventional_draws = 100000;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.dag_path = j.value("dag", "");
  c.data_path = j.value("data", "");
  c.columns_path = j.value("columns", "");
  c.model_dir = j.value("model_dir", "");
  c.output_dir = j.value("output_dir", "");
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.data_seed = j.value("data_seed", c.data_seed);
  c.a1 = j.value("a1", c.a1);
  c.a0 = j.value("a0", c.a0);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.lower_is_better = j.value("lower_is_better", c.lower_is_better);
  c.threshold_cut = j.value("threshold_cut", c.threshold_cut);
  if (j.contains("strategies")) c.strategies = j.at("strategies").get<std::vector<std::string>>();
  c.ace_mode = j.value("ace_mode", c.ace_mode);
  c.interventional_draws = j.value("interventional_draws", c.interventional_draws);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.conditioner_widths =
        t.value("conditioner_widths", c.train.conditioner_widths);
    c.train.transformer_widths =
        t.value("transformer_widths", c.train.transformer_widths);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.split_fractions = t.value("split_fractions", c.train.split_fractions);
    c.train.context_width = t.value("context_width", c.train.context_width);
    c.train.quadrature_nodes = t.value("quadrature_nodes", c.train.quadrature_nodes);
    c.train.positivity_delta = t.value("positivity_delta", c.train.positivity_delta);
  }
  if (c.seeds.empty()) throw ConfigError("seed list is empty");
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    for (std::size_t k = i + 1; k < c.seeds.size(); ++k)
      if (c.seeds[i] == c.seeds[k]) throw ConfigError("seeds must be distinct");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

namespace detail {
inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("missing " + what + " path");
  if (!std::filesystem::exists(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

inline std::string model_path(const RunConfig& cfg, std::uint64_t seed) {
  return (std::filesystem::path(cfg.model_dir) / ("model_seed" + std::to_string(seed) + ".bin"))
      .string();
}
}  // namespace detail

// DAG + column-spec + CSV load, then the shared dequantization pass. All
// seeds see the same model-space table; only training-side randomness
// (init, shuffling, splits) varies by seed.
struct LoadedInputs {
  CausalDag dag;
  Dataset data;  // model space
};

inline LoadedInputs load_inputs(const RunConfig& cfg) {
  detail::require_file(cfg.dag_path, "DAG file");
  detail::require_file(cfg.columns_path, "column spec");
  detail::require_file(cfg.data_path, "dataset");
  LoadedInputs in;
  std::ifstream df(cfg.dag_path);
  std::string dag_text((std::istreambuf_iterator<char>(df)), std::istreambuf_iterator<char>());
  in.dag = parse_dag(dag_text);
  auto specs = load_column_specs(cfg.columns_path, in.dag);
  in.data = read_csv(cfg.data_path, in.dag, std::move(specs));
  dequantize_dataset(in.data, cfg.data_seed);
  return in;
}

inline TrainedModel load_model_for_seed(const RunConfig& cfg, std::uint64_t seed) {
  const std::string path = detail::model_path(cfg, seed);
  if (!std::filesystem::exists(path))
    throw ModelMissing("model for seed " + std::to_string(seed) + " not found at '" + path +
                       "' (run train first)");
  return load_model(path);
}

// train: one model per seed plus a metrics file.
inline std::vector<SeedMetrics> cmd_train(const RunConfig& cfg) {
  const LoadedInputs in = load_inputs(cfg);
  if (cfg.model_dir.empty()) throw ConfigError("missing model_dir");
  std::filesystem::create_directories(cfg.model_dir);
  std::vector<SeedMetrics> metrics;
  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainedModel model = train(in.data, in.dag, tc);
    save_model(detail::model_path(cfg, seed), model);
    metrics.push_back({seed, model.train_nll, model.val_nll, model.test_nll, model.best_epoch,
                       model.epochs_run});
  }
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_metrics_json(
        (std::filesystem::path(cfg.output_dir) / "metrics.json").string(), metrics);
  }
  return metrics;
}

// effects: ace.json plus cace.csv when the data carries a group key.
inline void cmd_effects(const RunConfig& cfg) {
  const LoadedInputs in = load_inputs(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::pair<std::uint64_t, EffectEstimate>> per_seed;
  std::map<long long, std::vector<double>> cace_rows;
  const bool has_group = !in.data.group.empty();
  for (std::uint64_t seed : cfg.seeds) {
    const TrainedModel model = load_model_for_seed(cfg, seed);
    EffectEstimate ace;
    if (cfg.ace_mode == "interventional")
      ace = interventional_ace(model, cfg.a1, cfg.a0, cfg.interventional_draws, seed);
    else
      ace = estimate_ace(model, in.data, cfg.a1, cfg.a0, seed);
    per_seed.emplace_back(seed, ace);
    if (has_group) {
      const auto cace = estimate_cace(model, in.data, cfg.a1, cfg.a0);
      for (const auto& [group, est] : cace) cace_rows[group].push_back(est.estimate);
    }
  }
  const auto outdir = std::filesystem::path(cfg.output_dir);
  write_ace_json((outdir / "ace.json").string(), cfg.a1, cfg.a0, per_seed);
  if (has_group) write_cace_csv((outdir / "cace.csv").string(), cfg.seeds, cace_rows);
}

// strategies: histogram.csv, advisability.csv, mean_outcome.csv, worlds.csv.
inline void cmd_strategies(const RunConfig& cfg) {
  const LoadedInputs in = load_inputs(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<StrategySeedResult> rows;
  for (std::uint64_t seed : cfg.seeds) {
    const TrainedModel model = load_model_for_seed(cfg, seed);
    for (const auto& sname : cfg.strategies) {
      TreatmentStrategy strat;
      strat.kind = strategy_from_name(sname);
      strat.epsilon = cfg.epsilon;
      strat.lower_is_better = cfg.lower_is_better;
      strat.threshold_cut = cfg.threshold_cut;
      const StrategyAssignment assign = assign_strategy(model, in.data, strat, cfg.a1, cfg.a0);
      const StrategyEvaluation eval = evaluate_strategy(model, in.data, assign);
      StrategySeedResult r;
      r.strategy = sname;
      r.seed = seed;
      r.advisability = assign.summary;
      r.mean_outcome = eval.mean_outcome;
      r.histogram = eval.histogram;
      if (!in.data.group.empty()) {
        std::map<long long, std::pair<double, std::size_t>> acc;
        for (std::size_t u = 0; u < eval.outcomes.size(); ++u) {
          auto& a = acc[in.data.group[u]];
          a.first += eval.outcomes[u];
          a.second += 1;
        }
        for (const auto& [g, a] : acc)
          r.group_mean_outcome[g] = a.first / static_cast<double>(a.second);
      }
      rows.push_back(std::move(r));
    }
  }
  const auto outdir = std::filesystem::path(cfg.output_dir);
  write_histogram_csv((outdir / "histogram.csv").string(), rows);
  write_advisability_csv((outdir / "advisability.csv").string(), rows);
  write_mean_outcome_csv((outdir / "mean_outcome.csv").string(), rows);
  if (!in.data.group.empty()) write_worlds_csv((outdir / "worlds.csv").string(), rows);
}

struct CounterfactualAnswer {
  std::vector<double> noise;
  double potential_outcome = 0.0;
  double observed_outcome = 0.0;
  double ice_plain = 0.0;
  double ice_thresholded = 0.0;
};

// counterfactual: one unit, one requested treatment.
inline CounterfactualAnswer cmd_counterfactual(const RunConfig& cfg, std::size_t row,
                                               double treatment) {
  const LoadedInputs in = load_inputs(cfg);
  if (row >= in.data.rows())
    throw RowOutOfRange("row " + std::to_string(row) + " outside dataset of " +
                        std::to_string(in.data.rows()) + " rows");
  const TrainedModel model = load_model_for_seed(cfg, cfg.seeds.front());
  std::vector<double> x(in.data.cols());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = in.data.values(row, j);
  CounterfactualAnswer ans;
  ans.noise = abduct(model, x);
  ans.potential_outcome = counterfactual_outcome(model, x, treatment);
  const auto q = detail::QueryColumns::from(model);
  ans.observed_outcome = detail::finish_outcome(model.columns[q.outcome], x[q.outcome]);
  ans.ice_plain = estimate_ice(model, x, cfg.a1, cfg.a0, false, cfg.threshold_cut).estimate;
  ans.ice_thresholded = estimate_ice(model, x, cfg.a1, cfg.a0, true, cfg.threshold_cut).estimate;
  return ans;
}

// synth: materialize a fixture (dataset, DAG, column spec, ground truth).
struct SynthResult {
  std::string data_csv, dag_file, columns_json, oracle_json, scm_file;
};

inline SynthResult cmd_synth(const std::string& fixture, std::size_t rows, std::uint64_t seed,
                             const std::string& out_dir) {
  const std::string text = fixtures::text(fixture);
  const SyntheticScm scm = SyntheticScm::parse(text);
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);

  SynthResult paths;
  paths.data_csv = (dir / (fixture + ".csv")).string();
  paths.dag_file = (dir / (fixture + ".cdag")).string();
  paths.columns_json = (dir / (fixture + ".columns.json")).string();
  paths.oracle_json = (dir / (fixture + ".oracle.json")).string();
  paths.scm_file = (dir / (fixture + ".scm")).string();

  const Dataset data = scm.sample(rows, seed);
  write_csv(paths.data_csv, data);
  std::ofstream(paths.dag_file) << scm.dag().serialize() << "\n";
  std::ofstream(paths.scm_file) << text;

  nlohmann::json cols;
  for (const auto& c : scm.column_specs()) {
    nlohmann::json jc;
    jc["kind"] = c.discrete ? "discrete" : "continuous";
    jc["cardinality"] = c.cardinality;
    jc["role"] = role_name(c.role);
    jc["group_key"] = c.group_key;
    cols[c.name] = jc;
  }
  std::ofstream(paths.columns_json) << nlohmann::json{{"columns", cols}}.dump(2) << "\n";

  std::string treatment, outcome;
  std::optional<std::string> group;
  for (const auto& n : scm.nodes()) {
    if (n.role == NodeRole::Treatment) treatment = n.name;
    if (n.role == NodeRole::Outcome) outcome = n.name;
    if (n.group_key) group = n.name;
  }
  const OracleEffects oracle =
      oracle_effects(scm, treatment, outcome, 1.0, 0.0, group, 1000000, derive_seed(seed, 99));
  nlohmann::json jo;
  jo["method"] = oracle.method;
  jo["ace"] = oracle.ace;
  if (oracle.ace_std_error) jo["ace_std_error"] = *oracle.ace_std_error;
  if (oracle.ice_constant) jo["ice_constant"] = *oracle.ice_constant;
  nlohmann::json jc;
  for (const auto& [g, v] : oracle.cace) jc[std::to_string(g)] = v;
  jo["cace"] = jc;
  std::ofstream(paths.oracle_json) << jo.dump(2) << "\n";
  return paths;
}

struct ValidateResult {
  double oracle_ace = 0.0;
  double flow_ace = 0.0;
  double backdoor = 0.0;
  double backdoor_se = 0.0;
  bool ok = false;
};

// validate: end-to-end triangle check on the discretized linear fixture.
// The flow trains on the sampled data, the backdoor estimator runs on the
// same raw table, and both are compared against the exact effect.
inline ValidateResult cmd_validate(const RunConfig& cfg, std::size_t rows, std::uint64_t seed,
                                   double flow_tol = 0.15, double se_factor = 3.0) {
  const SyntheticScm scm = fixtures::load("linear-discrete");
  const Dataset raw = scm.sample(rows, seed);
  const OracleEffects oracle = oracle_effects(scm, "A", "Y", cfg.a1, cfg.a0, std::nullopt,
                                              1000000, derive_seed(seed, 99));
  const EffectEstimate bd = backdoor_ace(raw, scm.dag(), cfg.a1, cfg.a0);

  Dataset model_space = raw;
  dequantize_dataset(model_space, cfg.data_seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.front();
  const TrainedModel model = train(model_space, scm.dag(), tc);
  const EffectEstimate flow = estimate_ace(model, model_space, cfg.a1, cfg.a0, tc.seed);

  ValidateResult r;
  r.oracle_ace = oracle.ace;
  r.flow_ace = flow.estimate;
  r.backdoor = bd.estimate;
  r.backdoor_se = bd.std_error.value_or(0.0);
  r.ok = std::abs(r.flow_ace - r.oracle_ace) < flow_tol &&
         std::abs(r.flow_ace - r.backdoor) < se_factor * r.backdoor_se;
  return r;
}

}  // namespace cgflow
