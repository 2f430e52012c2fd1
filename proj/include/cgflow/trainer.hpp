#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgflow/adamw.hpp"
#include "cgflow/dataset.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/flow.hpp"

namespace cgflow {

struct TrainConfig {
  std::vector<std::size_t> conditioner_widths = {40, 30, 20};
  std::vector<std::size_t> transformer_widths = {15, 10, 5};
  double learning_rate = 3e-4;
  double weight_decay = 1e-2;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::array<double, 3> split_fractions = {0.99, 0.005, 0.005};
  std::uint64_t seed = 1;
  std::size_t context_width = 10;
  std::size_t quadrature_nodes = 50;
  double positivity_delta = 1e-6;

  FlowConfig flow_config() const {
    FlowConfig f;
    f.conditioner_hidden = conditioner_widths;
    f.transformer_hidden = transformer_widths;
    f.context_width = context_width;
    f.quadrature_nodes = quadrature_nodes;
    f.positivity_delta = positivity_delta;
    return f;
  }
};

struct TrainedModel {
  FlowModel flow;
  std::vector<ColumnSpec> columns;  // per-column kind/cardinality/role metadata
  TrainConfig config;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double test_nll = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

namespace detail {
inline std::vector<Tensor> snapshot_params(FlowModel& m) {
  std::vector<Tensor> out;
  m.visit_params([&](Tensor& t) { out.push_back(t); });
  return out;
}

inline void restore_params(FlowModel& m, const std::vector<Tensor>& snap) {
  std::size_t k = 0;
  m.visit_params([&](Tensor& t) { t = snap[k++]; });
}
}  // namespace detail

// Maximum-likelihood training with per-epoch validation and early
// stopping; the returned parameters are the checkpoint with the best
// validation NLL seen. Requires model-space (dequantized) data.
inline TrainedModel train(const Dataset& data, const CausalDag& dag, const TrainConfig& config) {
  if (data.rows() == 0) throw EmptyDataset("training data is empty");
  if (data.cols() != dag.size()) throw ColumnMismatch("dataset/DAG column count mismatch");
  for (std::size_t j = 0; j < data.cols(); ++j) {
    if (data.columns[j].name != dag.name(j))
      throw ColumnMismatch("column '" + data.columns[j].name + "' does not match node '" +
                           dag.name(j) + "'");
    if (data.columns[j].discrete && !data.dequantized)
      throw ConfigError("discrete columns must be dequantized before training");
  }
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");

  const auto parts = split(data, config.split_fractions, config.seed);
  const Tensor& train_x = parts.train.values;
  const std::size_t n = train_x.rows();

  Rng init_rng(derive_seed(config.seed, 0xA11CE));
  TrainedModel out;
  out.flow = FlowModel(dag, config.flow_config(), init_rng);
  out.columns = data.columns;
  out.config = config;

  std::vector<Tensor*> params;
  out.flow.visit_params([&](Tensor& t) { params.push_back(&t); });
  AdamWState opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_snapshot = detail::snapshot_params(out.flow);
  std::size_t bad_epochs = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 0xE70C + epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      Tensor batch(stop - start, data.cols());
      for (std::size_t r = start; r < stop; ++r)
        for (std::size_t j = 0; j < data.cols(); ++j)
          batch(r - start, j) = train_x(order[r], j);
      Tape tape;
      ParamBinding binding(tape);
      const Tape::NodeId loss = out.flow.nll_on_tape(tape, binding, batch);
      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value))
        throw DivergedLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / config.batch_size));
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(&binding.grad(p));
      adamw_step(opt, params, grads);
    }

    const double val = out.flow.mean_nll(parts.validation.values);
    out.epochs_run = epoch;
    if (val < best_val) {
      best_val = val;
      best_snapshot = detail::snapshot_params(out.flow);
      out.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs > config.patience) break;
    }
  }

  detail::restore_params(out.flow, best_snapshot);
  out.val_nll = best_val;
  out.train_nll = out.flow.mean_nll(train_x);
  out.test_nll = out.flow.mean_nll(parts.test.values);
  return out;
}

// --- persistence ------------------------------------------------------------
//
// Versioned binary layout, little endian:
//   bytes 0..3   magic "CGNF"
//   u16          format version (currently 1)
//   u32 + bytes  canonical DAG text
//   u32 + bytes  JSON snapshot (config, columns, metrics)
//   u64 + raw    parameter doubles in visit_params order

namespace detail {
constexpr std::uint16_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptFile("unexpected end of model file");
  return v;
}

inline nlohmann::json config_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["conditioner_widths"] = m.config.conditioner_widths;
  j["transformer_widths"] = m.config.transformer_widths;
  j["learning_rate"] = m.config.learning_rate;
  j["weight_decay"] = m.config.weight_decay;
  j["batch_size"] = m.config.batch_size;
  j["max_epochs"] = m.config.max_epochs;
  j["patience"] = m.config.patience;
  j["split_fractions"] = m.config.split_fractions;
  j["seed"] = m.config.seed;
  j["context_width"] = m.config.context_width;
  j["quadrature_nodes"] = m.config.quadrature_nodes;
  j["positivity_delta"] = m.config.positivity_delta;
  j["train_nll"] = m.train_nll;
  j["val_nll"] = m.val_nll;
  j["test_nll"] = m.test_nll;
  j["best_epoch"] = m.best_epoch;
  j["epochs_run"] = m.epochs_run;
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : m.columns) {
    cols.push_back({{"name", c.name},
                    {"kind", c.discrete ? "discrete" : "continuous"},
                    {"cardinality", c.cardinality},
                    {"role", role_name(c.role)},
                    {"group_key", c.group_key}});
  }
  j["columns"] = cols;
  return j;
}

inline void config_from_json(const nlohmann::json& j, TrainedModel& m) {
  m.config.conditioner_widths = j.at("conditioner_widths").get<std::vector<std::size_t>>();
  m.config.transformer_widths = j.at("transformer_widths").get<std::vector<std::size_t>>();
  m.config.learning_rate = j.at("learning_rate").get<double>();
  m.config.weight_decay = j.at("weight_decay").get<double>();
  m.config.batch_size = j.at("batch_size").get<std::size_t>();
  m.config.max_epochs = j.at("max_epochs").get<std::size_t>();
  m.config.patience = j.at("patience").get<std::size_t>();
  m.config.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  m.config.seed = j.at("seed").get<std::uint64_t>();
  m.config.context_width = j.at("context_width").get<std::size_t>();
  m.config.quadrature_nodes = j.at("quadrature_nodes").get<std::size_t>();
  m.config.positivity_delta = j.at("positivity_delta").get<double>();
  m.train_nll = j.at("train_nll").get<double>();
  m.val_nll = j.at("val_nll").get<double>();
  m.test_nll = j.at("test_nll").get<double>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.epochs_run = j.at("epochs_run").get<std::size_t>();
  m.columns.clear();
  for (const auto& c : j.at("columns")) {
    ColumnSpec spec;
    spec.name = c.at("name").get<std::string>();
    spec.discrete = c.at("kind").get<std::string>() == "discrete";
    spec.cardinality = c.at("cardinality").get<std::size_t>();
    spec.role = role_from_name(c.at("role").get<std::string>());
    spec.group_key = c.at("group_key").get<bool>();
    m.columns.push_back(std::move(spec));
  }
}
}  // namespace detail

inline void save_model(const std::string& path, TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out.write("CGNF", 4);
  detail::write_pod<std::uint16_t>(out, detail::kFormatVersion);
  const std::string dag_text = model.flow.dag().serialize();
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dag_text.size()));
  out.write(dag_text.data(), static_cast<std::streamsize>(dag_text.size()));
  const std::string meta = detail::config_to_json(model).dump();
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  std::vector<double> flat;
  model.flow.visit_params([&](Tensor& t) {
    flat.insert(flat.end(), t.storage().begin(), t.storage().end());
  });
  detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(flat.size()));
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CGNF", 4) != 0)
    throw CorruptFile("'" + path + "' is not a model file (bad magic)");
  const auto version = detail::read_pod<std::uint16_t>(in);
  if (version > detail::kFormatVersion)
    throw VersionMismatch("model format version " + std::to_string(version) +
                          " is newer than supported version " +
                          std::to_string(detail::kFormatVersion));

  const auto dag_len = detail::read_pod<std::uint32_t>(in);
  std::string dag_text(dag_len, '\0');
  in.read(dag_text.data(), dag_len);
  const auto meta_len = detail::read_pod<std::uint32_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), meta_len);
  if (!in) throw CorruptFile("truncated model file '" + path + "'");

  TrainedModel model;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    throw CorruptFile("model metadata is not valid JSON");
  }
  detail::config_from_json(j, model);

  const CausalDag dag = parse_dag(dag_text);
  Rng dummy(0);
  model.flow = FlowModel(dag, model.config.flow_config(), dummy);

  const auto count = detail::read_pod<std::uint64_t>(in);
  std::vector<double> flat(count);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw CorruptFile("truncated parameter block in '" + path + "'");
  std::size_t k = 0;
  model.flow.visit_params([&](Tensor& t) {
    for (std::size_t e = 0; e < t.size(); ++e) {
      if (k >= flat.size()) throw CorruptFile("parameter block too short");
      t[e] = flat[k++];
    }
  });
  if (k != flat.size()) throw CorruptFile("parameter block has trailing values");
  return model;
}

}  // namespace cgflow
