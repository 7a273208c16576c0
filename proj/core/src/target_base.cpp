#include "zigzag/target_base.hpp"

#include <cmath>

namespace zigzag {

Localization CoalescentTargetBase::localize(const HybridState& state) const {
  Localization loc{increment_, -1};
  for (int i = 0; i < dim_; ++i) {
    if (state.vels[i] >= 0.0) continue;
    const bool guarded = boundary_guarded(state, i);
    const double divisor = guarded ? 1.0 + c_ : 1.0;
    const double candidate = -state.coords[i] / (divisor * state.vels[i]);
    if (candidate < loc.window) {
      loc.window = candidate;
      loc.boundary_coord = guarded ? -1 : i;
    }
  }
  return loc;
}

BoundaryJump CoalescentTargetBase::boundary_jump(const HybridState& state, int coord,
                                                 RngStream& rng) const {
  ++counters_.boundary_events;
  switch (classify_boundary(state.topo(), coord, dim_)) {
    case BoundaryType::Type1:
      return {};
    case BoundaryType::Type2: {
      RankedTopology landing = swap_mergers(state.topo(), coord);
      validate_jump(state, coord, landing);
      return {std::move(landing)};
    }
    case BoundaryType::Type3: {
      RankedTopology landing = rng.bernoulli(0.5) ? pivot_up(state.topo(), coord)
                                                  : pivot_down(state.topo(), coord);
      validate_jump(state, coord, landing);
      return {std::move(landing)};
    }
  }
  return {};
}

void CoalescentTargetBase::validate_jump(const HybridState&, int,
                                         const RankedTopology&) const {}

double PriorOnlyTarget::log_density(const HybridState& state) const {
  ++counters_.density_evals;
  return log_prior(leaf_count_, state.coords);
}

double PriorOnlyTarget::flip_rate(const HybridState& state, int i) const {
  ++counters_.rate_evals;
  const double k = static_cast<double>(leaf_count_ - i);
  const double rate = state.vels[i] * k * (k - 1) / 2.0;
  return rate > 0.0 ? rate : 0.0;
}

double PriorOnlyTarget::flip_bound(const HybridState& state, int i, double) const {
  ++counters_.bound_evals;
  // The prior gradient is constant on each orthant, so the rate itself is
  // the tight bound.
  const double k = static_cast<double>(leaf_count_ - i);
  const double rate = state.vels[i] * k * (k - 1) / 2.0;
  return rate > 0.0 ? rate : 0.0;
}

std::vector<double> default_speeds(int leaf_count, bool has_theta, double theta_speed) {
  std::vector<double> speeds;
  speeds.reserve(has_theta ? leaf_count : leaf_count - 1);
  for (int i = 0; i < leaf_count - 1; ++i) {
    const double k = static_cast<double>(leaf_count - i);
    speeds.push_back(2.0 / (k * (k - 1)));
  }
  if (has_theta) speeds.push_back(theta_speed);
  return speeds;
}

}  // namespace zigzag
