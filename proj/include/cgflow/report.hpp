#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgflow/counterfactual.hpp"
#include "cgflow/effects.hpp"
#include "cgflow/errors.hpp"

namespace cgflow {

inline std::string format_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct SeedStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seeds
};

inline SeedStats seed_stats(const std::vector<double>& values) {
  SeedStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace detail {
inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}
}  // namespace detail

struct SeedMetrics {
  std::uint64_t seed = 0;
  double train_nll = 0.0, val_nll = 0.0, test_nll = 0.0;
  std::size_t best_epoch = 0, epochs_run = 0;
};

inline void write_metrics_json(const std::string& path, const std::vector<SeedMetrics>& metrics) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : metrics) {
    per.push_back({{"seed", m.seed},
                   {"train_nll", m.train_nll},
                   {"val_nll", m.val_nll},
                   {"test_nll", m.test_nll},
                   {"best_epoch", m.best_epoch},
                   {"epochs_run", m.epochs_run}});
  }
  nlohmann::json j{{"per_seed", per}};
  detail::open_out(path) << j.dump(2) << "\n";
}

inline void write_ace_json(const std::string& path, double a1, double a0,
                           const std::vector<std::pair<std::uint64_t, EffectEstimate>>& per_seed) {
  nlohmann::json per = nlohmann::json::array();
  std::vector<double> estimates;
  for (const auto& [seed, est] : per_seed) {
    nlohmann::json e{{"seed", seed},
                     {"estimate", est.estimate},
                     {"n_units", est.n_units},
                     {"n_noise_draws", est.n_noise_draws}};
    if (est.std_error)
      e["std_error"] = *est.std_error;
    else
      e["std_error"] = nullptr;
    per.push_back(e);
    estimates.push_back(est.estimate);
  }
  const SeedStats agg = seed_stats(estimates);
  nlohmann::json j{{"a1", a1},
                   {"a0", a0},
                   {"per_seed", per},
                   {"aggregate",
                    {{"mean", agg.mean}, {"std", agg.stddev}, {"n_seeds", per_seed.size()}}}};
  detail::open_out(path) << j.dump(2) << "\n";
}

// Wide per-group table: one column per seed, then the cross-seed mean and
// sample std, then whether the band mean +- std crosses the zero-effect
// line.
inline void write_cace_csv(
    const std::string& path, const std::vector<std::uint64_t>& seeds,
    const std::map<long long, std::vector<double>>& per_group_estimates) {
  auto out = detail::open_out(path);
  out << "group";
  for (std::uint64_t s : seeds) out << ",seed_" << s;
  out << ",mean,std,zero_within_band\n";
  for (const auto& [group, values] : per_group_estimates) {
    const SeedStats agg = seed_stats(values);
    out << group;
    for (double v : values) out << "," << format_num(v);
    const bool zero_in = agg.mean - agg.stddev <= 0.0 && 0.0 <= agg.mean + agg.stddev;
    out << "," << format_num(agg.mean) << "," << format_num(agg.stddev) << ","
        << (zero_in ? 1 : 0) << "\n";
  }
}

struct StrategySeedResult {
  std::string strategy;
  std::uint64_t seed = 0;
  AdvisabilitySummary advisability;
  double mean_outcome = 0.0;
  std::vector<std::size_t> histogram;                 // by degree
  std::map<long long, double> group_mean_outcome;     // by group key
};

inline void write_histogram_csv(const std::string& path,
                                const std::vector<StrategySeedResult>& rows) {
  auto out = detail::open_out(path);
  out << "strategy,seed,degree,count\n";
  for (const auto& r : rows)
    for (std::size_t deg = 0; deg < r.histogram.size(); ++deg)
      out << r.strategy << "," << r.seed << "," << deg << "," << r.histogram[deg] << "\n";
}

inline void write_advisability_csv(const std::string& path,
                                   const std::vector<StrategySeedResult>& rows) {
  auto out = detail::open_out(path);
  out << "strategy,seed,encouraged_pct,discouraged_pct,neutral_pct\n";
  for (const auto& r : rows)
    out << r.strategy << "," << r.seed << "," << format_num(r.advisability.encouraged_pct) << ","
        << format_num(r.advisability.discouraged_pct) << ","
        << format_num(r.advisability.neutral_pct) << "\n";
}

inline void write_mean_outcome_csv(const std::string& path,
                                   const std::vector<StrategySeedResult>& rows) {
  auto out = detail::open_out(path);
  out << "strategy,seed,mean_outcome\n";
  for (const auto& r : rows)
    out << r.strategy << "," << r.seed << "," << format_num(r.mean_outcome) << "\n";
}

inline void write_worlds_csv(const std::string& path,
                             const std::vector<StrategySeedResult>& rows) {
  auto out = detail::open_out(path);
  out << "group,strategy,seed,mean_outcome\n";
  for (const auto& r : rows)
    for (const auto& [group, mean] : r.group_mean_outcome)
      out << group << "," << r.strategy << "," << r.seed << "," << format_num(mean) << "\n";
}

}  // namespace cgflow
