#pragma once

#include <string>

#include "cgflow/errors.hpp"
#include "cgflow/synth.hpp"

namespace cgflow {
namespace fixtures {

// Linear-Gaussian system over the confounded four-node graph
// (C -> A, C -> Y, A -> Y, O -> Y). Everything is continuous, so the
// constant treatment effect of 2 per unit is available in closed form.
inline const char* kLinear = R"(# linear-gaussian benchmark
O role=other                ~ normal(0, 1) : u
C role=confounder           ~ normal(0, 1) : u
A role=treatment            ~ normal(0, 1) : 0.8*C + u
Y role=outcome              ~ normal(0, 1) : 2*A + C + 0.5*O + u
)";

// Discretized variant of the linear system: binary treatment, five-level
// confounder, so the stratified backdoor estimator applies. The outcome
// mechanism stays linear in A with slope 2.
inline const char* kLinearDiscrete = R"(# discretized linear benchmark
O role=other                         ~ normal(0, 1) : u
C discrete(5) role=confounder        ~ discrete_uniform(5) : u
A discrete(2) role=treatment         ~ normal(0, 1) : step(0.5*(C - 2) + u)
Y role=outcome                       ~ normal(0, 1) : 2*A + 0.5*(C - 2) + 0.3*O + u
)";

// Heterogeneous treatment effect: the effect of A on Y is C itself, so
// CACE(C=0) = 0 and CACE(C=1) = 1 while ACE = 0.5.
inline const char* kInteraction = R"(# binary interaction benchmark
C discrete(2) role=confounder group  ~ bernoulli(0.5) : u
A discrete(2) role=treatment         ~ normal(0, 1) : step(0.25*(C - 0.5) + u)
Y role=outcome                       ~ normal(0, 1) : A*C + u
)";

// Eight-level discrete outcome over four synthetic countries. Baseline
// severity and the (always non-harmful) treatment benefit both grow with
// the country index; country 3 has baseline 7 and benefit 5, so its
// low-noise units realize the potential-outcome pair (7, 2).
inline const char* kPoverty = R"(# discrete-outcome benchmark with group key
G discrete(4) role=confounder group  ~ discrete_uniform(4) : u
O discrete(3) role=other             ~ discrete_uniform(3) : u
A discrete(2) role=treatment         ~ normal(0, 1) : step(0.35*(G - 1.5) + u)
Y discrete(8) role=outcome           ~ normal(0, 0.3) : 1 + 2*G - (G + 2*step(G - 2.5))*A + O + u
)";

inline std::string text(const std::string& name) {
  if (name == "linear") return kLinear;
  if (name == "linear-discrete") return kLinearDiscrete;
  if (name == "interaction") return kInteraction;
  if (name == "poverty") return kPoverty;
  throw ConfigError("unknown fixture '" + name +
                    "' (expected linear, linear-discrete, interaction or poverty)");
}

inline SyntheticScm load(const std::string& name) { return SyntheticScm::parse(text(name)); }

}  // namespace fixtures
}  // namespace cgflow
