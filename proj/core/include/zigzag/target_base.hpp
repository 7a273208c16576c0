#pragma once

#include <memory>

#include "zigzag/engine.hpp"
#include "zigzag/priors.hpp"
#include "zigzag/tau.hpp"

namespace zigzag {

// Shared machinery of the tree-space targets: coordinate layout (holding
// times, optionally followed by theta), the localization window with its
// guard divisors, and the boundary kernel (reflect / swap / random pivot).
class CoalescentTargetBase : public TargetModel {
 public:
  int dim() const override { return dim_; }
  int leaf_count() const { return leaf_count_; }
  bool has_theta() const { return has_theta_; }
  int theta_coord() const { return dim_ - 1; }

  // Localization tuning: window cap K and guard divisor 1 + c.
  double default_increment() const { return increment_; }
  void set_default_increment(double k) { increment_ = k; }
  double localization_c() const { return c_; }
  void set_localization_c(double c) { c_ = c; }

  // Window T = min(K, min_i -t_i / (d_i v_i)) over negative velocities, with
  // d_i = 1 + c on guarded coordinates. The window ends in a boundary hit
  // only when an unguarded coordinate attains the min.
  Localization localize(const HybridState& state) const override;

  // Reflect at a type 1 face, swap through a type 2 face, pivot to a uniform
  // neighbor at a type 3 face. Jumps landing in a zero-density mode are a
  // localization bug and throw.
  BoundaryJump boundary_jump(const HybridState& state, int coord,
                             RngStream& rng) const override;

  // Zero-likelihood screen for rearrangement proposals; exact targets
  // override so that incompatible topologies are rejected before any
  // likelihood work.
  virtual bool mode_consistent(const RankedTopology&) const { return true; }

  struct Counters {
    long density_evals = 0;
    long rate_evals = 0;
    long bound_evals = 0;
    long boundary_events = 0;
  };
  const Counters& counters() const { return counters_; }
  void reset_counters() const { counters_ = Counters{}; }

 protected:
  CoalescentTargetBase(int leaf_count, bool has_theta)
      : leaf_count_(leaf_count),
        has_theta_(has_theta),
        dim_(has_theta ? leaf_count : leaf_count - 1) {}

  // Whether the boundary at coords[coord] = 0 carries zero density, making
  // it unreachable (guard divisor 1 + c).
  virtual bool boundary_guarded(const HybridState& state, int coord) const = 0;

  // Hook run after a type 2/3 jump with the landing topology.
  virtual void validate_jump(const HybridState& state, int coord,
                             const RankedTopology& landing) const;

  int leaf_count_;
  bool has_theta_;
  int dim_;
  double increment_ = 1.0;
  double c_ = 4.0;
  mutable Counters counters_;
};

// The coalescent prior itself (no data, no theta coordinate): flip rates are
// piecewise constant, so the thinning bounds are exact.
class PriorOnlyTarget final : public CoalescentTargetBase {
 public:
  explicit PriorOnlyTarget(int leaf_count)
      : CoalescentTargetBase(leaf_count, /*has_theta=*/false) {}

  double log_density(const HybridState& state) const override;
  double flip_rate(const HybridState& state, int i) const override;
  double flip_bound(const HybridState& state, int i, double window) const override;

 protected:
  bool boundary_guarded(const HybridState&, int) const override { return false; }
};

// Default speed magnitudes 2/[(n+1-i)(n-i)] for the holding times, paired
// with the given theta speed when the target has a theta coordinate.
std::vector<double> default_speeds(int leaf_count, bool has_theta, double theta_speed);

}  // namespace zigzag
