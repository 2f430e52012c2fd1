#pragma once

#include <cstdint>
#include <optional>

namespace cgflow {

// Point estimate of a causal contrast plus its Monte-Carlo spread.
// std_error is absent when fewer than two replicates back the estimate.
struct EffectEstimate {
  double estimate = 0.0;
  std::optional<double> std_error = 0.0;
  std::size_t n_units = 0;
  std::size_t n_noise_draws = 1;
  std::uint64_t seed = 0;
};

}  // namespace cgflow
