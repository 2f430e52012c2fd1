#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgflow/dag.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/rng.hpp"
#include "cgflow/tensor.hpp"

namespace cgflow {

struct ColumnSpec {
  std::string name;
  bool discrete = false;
  std::size_t cardinality = 0;  // number of levels when discrete
  NodeRole role = NodeRole::Plain;
  bool group_key = false;
};

// Column-typed table of units, aligned to a DAG's node order. `values`
// holds raw integers for discrete columns until dequantize_dataset()
// replaces them with their continuous embedding; `group` keeps the raw
// group-key value per row either way.
struct Dataset {
  std::vector<ColumnSpec> columns;
  Tensor values;  // n x d, row-major
  std::vector<long long> group;
  bool dequantized = false;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return columns.size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].name == name) return j;
    throw UnknownNode("no column '" + name + "'");
  }

  std::optional<std::size_t> role_index(NodeRole role) const {
    std::optional<std::size_t> found;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].role == role) {
        if (found) throw ConfigError("more than one column with role " + role_name(role));
        found = j;
      }
    }
    return found;
  }

  std::optional<std::size_t> group_index() const {
    std::optional<std::size_t> found;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].group_key) {
        if (found) throw ConfigError("more than one group-key column");
        found = j;
      }
    }
    return found;
  }

  Dataset take_rows(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.columns = columns;
    out.dequantized = dequantized;
    out.values = Tensor(idx.size(), cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < cols(); ++j) out.values(r, j) = values(idx[r], j);
    if (!group.empty()) {
      out.group.reserve(idx.size());
      for (std::size_t r : idx) out.group.push_back(group[r]);
    }
    return out;
  }
};

// --- de/quantization ------------------------------------------------------

// Replaces each integer D with a draw from Normal(D, 1/36).
inline std::vector<double> dequantize(const std::vector<double>& values, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (!std::isfinite(v) || std::floor(v) != v)
      throw NonIntegerInput("dequantize expects integers, got " + std::to_string(v));
    out.push_back(rng.normal(v, 1.0 / 6.0));
  }
  return out;
}

// Rounds half away from zero, then clamps to [0, N-1].
inline std::vector<double> quantize(const std::vector<double>& values, std::size_t cardinality) {
  if (cardinality < 1) throw ConfigError("quantize needs cardinality >= 1");
  std::vector<double> out;
  out.reserve(values.size());
  const double top = static_cast<double>(cardinality - 1);
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteInput("quantize got a non-finite value");
    out.push_back(std::min(top, std::max(0.0, std::round(v))));
  }
  return out;
}

inline double quantize_one(double v, std::size_t cardinality) {
  if (!std::isfinite(v)) throw NonFiniteInput("quantize got a non-finite value");
  return std::min(static_cast<double>(cardinality - 1), std::max(0.0, std::round(v)));
}

// Dequantizes every discrete column in place; column k uses substream k of
// `seed`, so the embedding of a dataset is a pure function of (data, seed)
// and can be shared across differently-seeded training runs.
inline void dequantize_dataset(Dataset& ds, std::uint64_t seed) {
  if (ds.dequantized) return;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (!ds.columns[j].discrete) continue;
    Rng rng(derive_seed(seed, j));
    for (std::size_t u = 0; u < ds.rows(); ++u)
      ds.values(u, j) = rng.normal(ds.values(u, j), 1.0 / 6.0);
  }
  ds.dequantized = true;
}

// --- splitting --------------------------------------------------------------

// Largest-remainder apportionment of n rows over the fractions; covers all
// rows exactly, matching floor allocation with leftover seats going to the
// largest fractional parts.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& f) {
  double total = f[0] + f[1] + f[2];
  if (!(f[0] > 0 && f[1] > 0 && f[2] > 0) || std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split fractions must be positive and sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = f[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - std::floor(exact);
    used += sizes[k];
  }
  std::size_t left = n - used;
  while (left-- > 0) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best]) best = k;
    sizes[best] += 1;
    rem[best] = -1.0;
  }
  return sizes;
}

struct SplitResult {
  Dataset train, validation, test;
};

inline SplitResult split(const Dataset& data, const std::array<double, 3>& fractions,
                         std::uint64_t seed) {
  if (data.rows() == 0) throw EmptyDataset("cannot split an empty dataset");
  const auto sizes = split_sizes(data.rows(), fractions);
  std::vector<std::size_t> idx(data.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  SplitResult out;
  out.train = data.take_rows({idx.begin(), idx.begin() + sizes[0]});
  out.validation = data.take_rows({idx.begin() + sizes[0], idx.begin() + sizes[0] + sizes[1]});
  out.test = data.take_rows({idx.begin() + sizes[0] + sizes[1], idx.end()});
  return out;
}

// --- column specs and CSV ---------------------------------------------------

inline std::vector<ColumnSpec> column_specs_from_json(const nlohmann::json& j,
                                                      const CausalDag& dag) {
  if (!j.contains("columns")) throw ConfigError("column spec needs a 'columns' object");
  const auto& cols = j.at("columns");
  std::vector<ColumnSpec> out;
  for (const auto& name : dag.node_names()) {
    if (!cols.contains(name)) throw ColumnMismatch("column spec missing node '" + name + "'");
    const auto& c = cols.at(name);
    ColumnSpec spec;
    spec.name = name;
    const std::string kind = c.value("kind", "continuous");
    if (kind == "discrete") {
      spec.discrete = true;
      if (!c.contains("cardinality"))
        throw ConfigError("discrete column '" + name + "' needs a cardinality");
      spec.cardinality = c.at("cardinality").get<std::size_t>();
      if (spec.cardinality < 1) throw ConfigError("cardinality must be >= 1");
    } else if (kind != "continuous") {
      throw ConfigError("column kind must be discrete or continuous");
    }
    spec.role = role_from_name(c.value("role", "plain"));
    spec.group_key = c.value("group_key", false);
    out.push_back(std::move(spec));
  }
  for (const auto& [name, unused] : cols.items()) {
    (void)unused;
    if (!dag.has_node(name)) throw ColumnMismatch("column spec names unknown node '" + name + "'");
  }
  return out;
}

inline std::vector<ColumnSpec> load_column_specs(const std::string& path, const CausalDag& dag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open column spec '" + path + "'");
  nlohmann::json j;
  in >> j;
  return column_specs_from_json(j, dag);
}

namespace detail {
inline std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  const std::string t = trim(s);
  if (t.empty()) throw ColumnMismatch("missing value on line " + std::to_string(line_no));
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw ColumnMismatch("bad numeric value '" + t + "' on line " + std::to_string(line_no));
  return v;
}
}  // namespace detail

// CSV with a header naming every DAG node (any order). Rows with gaps,
// non-numeric cells, or out-of-range discrete levels are rejected.
inline Dataset read_csv(const std::string& path, const CausalDag& dag,
                        std::vector<ColumnSpec> specs) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw EmptyDataset("dataset '" + path + "' is empty");
  const auto header = detail::split_line(line, ',');
  if (header.size() != dag.size())
    throw ColumnMismatch("header has " + std::to_string(header.size()) + " columns, DAG has " +
                         std::to_string(dag.size()));
  std::vector<std::size_t> col_of_node(dag.size(), header.size());
  for (std::size_t h = 0; h < header.size(); ++h) {
    const std::string name = detail::trim(header[h]);
    if (!dag.has_node(name)) throw ColumnMismatch("CSV column '" + name + "' is not a DAG node");
    col_of_node[dag.index_of(name)] = h;
  }
  for (std::size_t i = 0; i < dag.size(); ++i)
    if (col_of_node[i] == header.size())
      throw ColumnMismatch("CSV is missing node '" + dag.name(i) + "'");

  std::vector<double> flat;
  std::size_t line_no = 1, n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_line(line, ',');
    if (cells.size() != header.size())
      throw ColumnMismatch("line " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells");
    for (std::size_t i = 0; i < dag.size(); ++i)
      flat.push_back(detail::parse_double(cells[col_of_node[i]], line_no));
    ++n;
  }

  Dataset ds;
  ds.columns = std::move(specs);
  ds.values = Tensor(n, dag.size());
  ds.values.storage() = std::move(flat);
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const auto& spec = ds.columns[j];
    if (!spec.discrete) continue;
    for (std::size_t u = 0; u < ds.rows(); ++u) {
      const double v = ds.values(u, j);
      if (std::floor(v) != v || v < 0 || v >= static_cast<double>(spec.cardinality))
        throw ColumnMismatch("column '" + spec.name + "' row " + std::to_string(u) +
                             ": value " + std::to_string(v) + " outside [0, " +
                             std::to_string(spec.cardinality - 1) + "]");
    }
  }
  const auto g = ds.group_index();
  if (g) {
    ds.group.reserve(ds.rows());
    for (std::size_t u = 0; u < ds.rows(); ++u)
      ds.group.push_back(static_cast<long long>(ds.values(u, *g)));
  }
  return ds;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < ds.cols(); ++j) out << (j ? "," : "") << ds.columns[j].name;
  out << "\n";
  for (std::size_t u = 0; u < ds.rows(); ++u) {
    for (std::size_t j = 0; j < ds.cols(); ++j)
      out << (j ? "," : "") << format_value(ds.values(u, j));
    out << "\n";
  }
}

}  // namespace cgflow
