#pragma once

#include <cmath>

#include "zigzag/engine.hpp"

namespace testfix {

// Central-difference partial of the log target with a coordinate-scaled step
// kept inside the positive orthant.
inline double fd_partial(const zigzag::TargetModel& model, const zigzag::HybridState& state,
                         int i) {
  const double x = state.coords[i];
  const double h = std::min(1e-5 * std::max(std::abs(x), 0.1), x / 2);
  zigzag::HybridState lo = state, hi = state;
  lo.coords[i] = x - h;
  hi.coords[i] = x + h;
  return (model.log_density(hi) - model.log_density(lo)) / (2.0 * h);
}

// Independent oracle for the flip rate: (-v_i d_i log pi)^+ by central
// differences.
inline double fd_flip_rate(const zigzag::TargetModel& model,
                           const zigzag::HybridState& state, int i) {
  const double rate = -state.vels[i] * fd_partial(model, state, i);
  return rate > 0.0 ? rate : 0.0;
}

inline void randomize_signs(std::vector<double>& vels, zigzag::RngStream& rng) {
  for (double& v : vels)
    if (rng.bernoulli(0.5)) v = -v;
}

}  // namespace testfix
