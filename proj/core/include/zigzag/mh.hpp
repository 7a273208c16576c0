#pragma once

#include <cstdint>

#include "zigzag/target_base.hpp"

namespace zigzag {

struct MhConfig {
  double sigma_theta = 1.0;
  double sigma_times = 1.0;
  double kappa = 0.0;  // hybrid interrupt rate
};

struct MhStats {
  long proposed_theta = 0, accepted_theta = 0;
  long proposed_times = 0, accepted_times = 0;
  long proposed_spr = 0, accepted_spr = 0;
  long infeasible_spr = 0, incompatible_spr = 0;

  double acceptance(MhKind kind) const;
};

// Gaussian random walk on theta reflected at 0; the reflected proposal is
// symmetric so the acceptance ratio is the density ratio alone.
bool theta_step(const TargetModel& model, HybridState& state, double sigma,
                RngStream& rng);

// Sequential truncated-normal proposal of the merger times: each proposed
// time is centered at the current one and truncated below by the previously
// proposed time, so differencing returns positive holding times and the
// ranking is preserved. Accepted with the full Hastings ratio of the
// truncated-normal forward and reverse densities.
bool times_step(const TargetModel& model, HybridState& state, double sigma,
                RngStream& rng);

struct SprOutcome {
  bool accepted = false;
  bool infeasible = false;    // empty window or target inside the pruned subtree
  bool incompatible = false;  // screened out before any density evaluation
};

// Subtree-prune-regraft: an ordered pair (pruned edge, target edge) uniform
// over edges x (edges + root edge), reattachment time uniform on the feasible
// interval, or exponentially above the root. The acceptance ratio pairs the
// move with its unique reverse.
SprOutcome spr_step(const CoalescentTargetBase& model, HybridState& state,
                    RngStream& rng);

// Deterministic reattachment used by spr_step, exposed for tests: prunes the
// edge above prune_child and reattaches it into the edge above target_child
// (-1 = above the root) at the given absolute time, then re-ranks.
HybridState apply_spr(const HybridState& state, NodeId prune_child,
                      NodeId target_child, double new_time);

struct MhRunResult {
  EventTrace trace;
  MhStats stats;
};

// Discrete-time chain: each sweep runs a theta step (when the target has a
// theta coordinate), a times step, and an SPR step, one trace event per
// proposal. The trace carries zero velocities so its path is
// piecewise-constant.
MhRunResult mh_run(const CoalescentTargetBase& model, const HybridState& init,
                   long sweeps, const MhConfig& config, std::uint64_t seed);

// Zig-zag trajectory interleaved with MH moves (theta or SPR, chosen
// uniformly) at the arrival times of a rate-kappa Poisson process.
MhRunResult hybrid_run(const CoalescentTargetBase& model, const HybridState& init,
                       double t_end, double kappa, const MhConfig& config,
                       std::uint64_t seed);

// Warm-up scale tuning toward acceptance ~ 1/4, then frozen. Evolves the
// state in place (warm start) and returns the tuned configuration.
MhConfig tune_mh(const CoalescentTargetBase& model, HybridState& state,
                 long warmup_sweeps, MhConfig config, std::uint64_t seed);

}  // namespace zigzag
