// cgflow: train causal normalizing flows over a user-supplied DAG and
// answer interventional / counterfactual queries from the command line.

#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgflow/cgflow.hpp"

namespace {

cgflow::RunConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return cgflow::RunConfig{};
  return cgflow::load_run_config(config_path);
}

struct CommonOpts {
  std::string config;
  std::string dag, data, columns, model_dir, out;
  std::vector<std::uint64_t> seeds;
  long long data_seed = -1;
  double epsilon = -1.0;
  double a1 = std::numeric_limits<double>::quiet_NaN();
  double a0 = std::numeric_limits<double>::quiet_NaN();
  long long max_epochs = -1;
  long long patience = -1;
  long long batch_size = -1;
  double learning_rate = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config,-c", config, "run config JSON");
    cmd->add_option("--dag", dag, "DAG file (.cdag)");
    cmd->add_option("--data", data, "dataset CSV");
    cmd->add_option("--columns", columns, "column spec JSON");
    cmd->add_option("--model-dir", model_dir, "model directory");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seeds", seeds, "seed list");
    cmd->add_option("--data-seed", data_seed, "dequantization seed");
    cmd->add_option("--epsilon", epsilon, "neutrality threshold");
    cmd->add_option("--a1", a1, "encouraged treatment value");
    cmd->add_option("--a0", a0, "discouraged treatment value");
    cmd->add_option("--max-epochs", max_epochs, "training epoch cap");
    cmd->add_option("--patience", patience, "early stopping patience");
    cmd->add_option("--batch-size", batch_size, "training batch size");
    cmd->add_option("--learning-rate", learning_rate, "AdamW learning rate");
  }

  cgflow::RunConfig resolve() const {
    cgflow::RunConfig cfg = load_config(config);
    if (!dag.empty()) cfg.dag_path = dag;
    if (!data.empty()) cfg.data_path = data;
    if (!columns.empty()) cfg.columns_path = columns;
    if (!model_dir.empty()) cfg.model_dir = model_dir;
    if (!out.empty()) cfg.output_dir = out;
    if (!seeds.empty()) cfg.seeds = seeds;
    if (data_seed >= 0) cfg.data_seed = static_cast<std::uint64_t>(data_seed);
    if (epsilon >= 0) cfg.epsilon = epsilon;
    if (!std::isnan(a1)) cfg.a1 = a1;
    if (!std::isnan(a0)) cfg.a0 = a0;
    if (max_epochs >= 0) cfg.train.max_epochs = static_cast<std::size_t>(max_epochs);
    if (patience >= 0) cfg.train.patience = static_cast<std::size_t>(patience);
    if (batch_size > 0) cfg.train.batch_size = static_cast<std::size_t>(batch_size);
    if (learning_rate > 0) cfg.train.learning_rate = learning_rate;
    return cfg;
  }
};

int dispatch(int argc, char** argv) {
  CLI::App app{"causal normalizing flow engine"};
  app.require_subcommand(1);

  CommonOpts train_opts, effects_opts, strategies_opts, cf_opts, validate_opts;

  auto* train_cmd = app.add_subcommand("train", "fit one model per seed");
  train_opts.attach(train_cmd);

  auto* effects_cmd = app.add_subcommand("effects", "average and group-level causal effects");
  effects_opts.attach(effects_cmd);

  auto* strategies_cmd =
      app.add_subcommand("strategies", "evaluate treatment strategies and advisability");
  strategies_opts.attach(strategies_cmd);

  auto* cf_cmd = app.add_subcommand("counterfactual", "per-unit potential outcome query");
  cf_opts.attach(cf_cmd);
  long long cf_row = 0;
  double cf_treatment = 1.0;
  cf_cmd->add_option("--row", cf_row, "dataset row index")->required();
  cf_cmd->add_option("--treatment", cf_treatment, "treatment value to apply")->required();

  auto* synth_cmd = app.add_subcommand("synth", "emit a benchmark dataset with ground truth");
  std::string synth_fixture = "linear";
  std::string synth_out;
  long long synth_rows = 20000;
  long long synth_seed = 7;
  synth_cmd->add_option("--fixture", synth_fixture,
                        "linear | linear-discrete | interaction | poverty");
  synth_cmd->add_option("--rows", synth_rows, "rows to sample");
  synth_cmd->add_option("--seed", synth_seed, "sampling seed");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  auto* validate_cmd =
      app.add_subcommand("validate", "oracle triangle check: truth vs flow vs adjustment");
  validate_opts.attach(validate_cmd);
  long long validate_rows = 20000;
  long long validate_seed = 7;
  validate_cmd->add_option("--rows", validate_rows, "rows to sample");
  validate_cmd->add_option("--seed", validate_seed, "sampling seed");

  CLI11_PARSE(app, argc, argv);

  if (train_cmd->parsed()) {
    const auto metrics = cgflow::cmd_train(train_opts.resolve());
    for (const auto& m : metrics)
      std::printf("seed %llu: train %.4f  val %.4f  test %.4f  (best epoch %zu of %zu)\n",
                  static_cast<unsigned long long>(m.seed), m.train_nll, m.val_nll, m.test_nll,
                  m.best_epoch, m.epochs_run);
    return 0;
  }
  if (effects_cmd->parsed()) {
    cgflow::cmd_effects(effects_opts.resolve());
    std::printf("effects written\n");
    return 0;
  }
  if (strategies_cmd->parsed()) {
    cgflow::cmd_strategies(strategies_opts.resolve());
    std::printf("strategy reports written\n");
    return 0;
  }
  if (cf_cmd->parsed()) {
    const auto cfg = cf_opts.resolve();
    const auto ans =
        cgflow::cmd_counterfactual(cfg, static_cast<std::size_t>(cf_row), cf_treatment);
    std::printf("row %lld\n", cf_row);
    std::printf("abducted noise:");
    for (double z : ans.noise) std::printf(" %.6f", z);
    std::printf("\nobserved outcome: %s\n", cgflow::format_num(ans.observed_outcome).c_str());
    std::printf("potential outcome under treatment %s: %s\n",
                cgflow::format_num(cf_treatment).c_str(),
                cgflow::format_num(ans.potential_outcome).c_str());
    std::printf("ICE (a1=%s vs a0=%s): plain %s, thresholded %s\n",
                cgflow::format_num(cfg.a1).c_str(), cgflow::format_num(cfg.a0).c_str(),
                cgflow::format_num(ans.ice_plain).c_str(),
                cgflow::format_num(ans.ice_thresholded).c_str());
    return 0;
  }
  if (synth_cmd->parsed()) {
    const auto paths = cgflow::cmd_synth(synth_fixture, static_cast<std::size_t>(synth_rows),
                                         static_cast<std::uint64_t>(synth_seed), synth_out);
    std::printf("wrote %s\n", paths.data_csv.c_str());
    std::printf("wrote %s\n", paths.dag_file.c_str());
    std::printf("wrote %s\n", paths.columns_json.c_str());
    std::printf("wrote %s\n", paths.oracle_json.c_str());
    std::printf("wrote %s\n", paths.scm_file.c_str());
    return 0;
  }
  if (validate_cmd->parsed()) {
    const auto r =
        cgflow::cmd_validate(validate_opts.resolve(), static_cast<std::size_t>(validate_rows),
                             static_cast<std::uint64_t>(validate_seed));
    std::printf("oracle ACE:    %.4f\n", r.oracle_ace);
    std::printf("flow ACE:      %.4f\n", r.flow_ace);
    std::printf("backdoor ACE:  %.4f (se %.4f)\n", r.backdoor, r.backdoor_se);
    std::printf("%s\n", r.ok ? "TRIANGLE OK" : "TRIANGLE FAILED");
    return r.ok ? 0 : 2;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const cgflow::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::ColumnMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::RowOutOfRange& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::ModelMissing& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::EmptySpec& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::ScmParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const cgflow::Error& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 2;
  }
}
