#include "zigzag/mh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace zigzag {

namespace {

// log P(Z > z) for standard normal Z, stable in the far right tail.
double log_normal_tail(double z) {
  if (z < 28.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  return -0.5 * z * z - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// log density at x of N(mean, sd) truncated to (lb, inf).
double log_truncated_normal(double x, double mean, double sd, double lb) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi) -
         log_normal_tail((lb - mean) / sd);
}

double truncated_normal_draw(double mean, double sd, double lb, RngStream& rng) {
  // Rejection against the untruncated normal; fine at the acceptance rates
  // seen here since means sit near the truncation only for tiny sd.
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.normal(mean, sd);
    if (x > lb) return x;
  }
  // Far-tail fallback: exponential tilting.
  const double a = (lb - mean) / sd;
  while (true) {
    const double u = rng.uniform_pos();
    const double x = a - std::log(u) / a;
    if (rng.uniform() < std::exp(-0.5 * (x - a) * (x - a))) return mean + sd * x;
  }
}

double merger_time_sd(int n, int k, double sigma) {
  // 0-based merger k; the first merger carries its own scale.
  if (k == 0) return sigma / std::sqrt(static_cast<double>(n) * (n - 1) * (n - 1));
  const double denom = static_cast<double>(n - 1) * (n - k) * (n - k - 1);
  return sigma / std::sqrt(denom);
}

// Mutable rooted tree for rearrangements; node ids as in the ranked
// encoding of the source state, times absolute.
struct MutableTree {
  int n = 0;
  NodeId root = -1;
  std::vector<NodeId> parent;
  std::vector<std::array<NodeId, 2>> kids;
  std::vector<double> time;

  static MutableTree from(const RankedTopology& E, std::span<const double> coords) {
    MutableTree t;
    t.n = E.leaf_count();
    t.root = E.root();
    const int nodes = 2 * t.n - 1;
    t.parent.resize(nodes);
    t.kids.resize(nodes);
    t.time.assign(nodes, 0.0);
    const auto times = node_times(coords.first(t.n - 1));
    for (NodeId v = 0; v < nodes; ++v) t.parent[v] = E.parent(v);
    for (int k = 0; k < t.n - 1; ++k) {
      t.kids[E.merger_node(k)] = {E.merger(k).first, E.merger(k).second};
      t.time[E.merger_node(k)] = times[k];
    }
    return t;
  }

  NodeId sibling(NodeId v) const {
    const auto& pair = kids[parent[v]];
    return pair[0] == v ? pair[1] : pair[0];
  }

  bool in_subtree(NodeId v, NodeId root_of) const {
    while (v >= 0) {
      if (v == root_of) return true;
      v = parent[v];
    }
    return false;
  }

  // Splices out v's parent; returns the detached parent id for reuse.
  NodeId prune(NodeId v) {
    const NodeId p = parent[v];
    const NodeId sib = sibling(v);
    const NodeId pp = parent[p];
    if (pp < 0) {
      root = sib;
      parent[sib] = -1;
    } else {
      auto& pair = kids[pp];
      (pair[0] == p ? pair[0] : pair[1]) = sib;
      parent[sib] = pp;
    }
    return p;
  }

  // Reattaches v under the recycled node np at absolute time t_new, either
  // into the edge above target (splitting it) or above the current root.
  void attach(NodeId v, NodeId np, NodeId target, double t_new) {
    time[np] = t_new;
    if (target < 0 || target == root) {
      const NodeId r = target < 0 ? root : target;
      kids[np] = {v, r};
      parent[r] = np;
      parent[np] = -1;
      parent[v] = np;
      root = np;
    } else {
      const NodeId q = parent[target];
      auto& pair = kids[q];
      (pair[0] == target ? pair[0] : pair[1]) = np;
      parent[np] = q;
      kids[np] = {v, target};
      parent[target] = np;
      parent[v] = np;
    }
  }

  // Back to the ranked encoding: internal nodes sorted by time.
  std::pair<RankedTopology, std::vector<double>> to_ranked() const {
    std::vector<NodeId> internal;
    internal.reserve(n - 1);
    for (NodeId v = n; v < 2 * n - 1; ++v) internal.push_back(v);
    std::sort(internal.begin(), internal.end(),
              [&](NodeId a, NodeId b) { return time[a] < time[b]; });
    std::vector<NodeId> new_id(2 * n - 1);
    for (NodeId v = 0; v < n; ++v) new_id[v] = v;
    for (int k = 0; k < n - 1; ++k) new_id[internal[k]] = static_cast<NodeId>(n + k);
    std::vector<MergerPair> mergers(n - 1);
    std::vector<double> holding(n - 1);
    double prev = 0.0;
    for (int k = 0; k < n - 1; ++k) {
      const NodeId old = internal[k];
      mergers[k] = {new_id[kids[old][0]], new_id[kids[old][1]]};
      holding[k] = time[old] - prev;
      prev = time[old];
    }
    return {RankedTopology(n, std::move(mergers)), std::move(holding)};
  }
};

}  // namespace

double MhStats::acceptance(MhKind kind) const {
  switch (kind) {
    case MhKind::Theta:
      return proposed_theta > 0 ? static_cast<double>(accepted_theta) / proposed_theta : 0.0;
    case MhKind::Times:
      return proposed_times > 0 ? static_cast<double>(accepted_times) / proposed_times : 0.0;
    case MhKind::Spr:
      return proposed_spr > 0 ? static_cast<double>(accepted_spr) / proposed_spr : 0.0;
  }
  return 0.0;
}

bool theta_step(const TargetModel& model, HybridState& state, double sigma,
                RngStream& rng) {
  const int tc = state.dim() - 1;
  const double before = model.log_density(state);
  const double old_theta = state.coords[tc];
  state.coords[tc] = std::abs(old_theta + rng.normal(0.0, sigma));
  const double after = model.log_density(state);
  if (std::log(rng.uniform_pos()) < after - before) return true;
  state.coords[tc] = old_theta;
  return false;
}

bool times_step(const TargetModel& model, HybridState& state, double sigma,
                RngStream& rng) {
  const int n = state.topo().leaf_count();
  const auto current = node_times(std::span(state.coords).first(n - 1));
  std::vector<double> proposed(n - 1);
  double log_fwd = 0.0, log_rev = 0.0;
  double lb_fwd = 0.0, lb_rev = 0.0;
  for (int k = 0; k < n - 1; ++k) {
    const double sd = merger_time_sd(n, k, sigma);
    proposed[k] = truncated_normal_draw(current[k], sd, lb_fwd, rng);
    log_fwd += log_truncated_normal(proposed[k], current[k], sd, lb_fwd);
    log_rev += log_truncated_normal(current[k], proposed[k], sd, lb_rev);
    lb_fwd = proposed[k];
    lb_rev = current[k];
  }
  const double before = model.log_density(state);
  std::vector<double> old_coords = state.coords;
  double prev = 0.0;
  for (int k = 0; k < n - 1; ++k) {
    state.coords[k] = proposed[k] - prev;
    prev = proposed[k];
  }
  const double after = model.log_density(state);
  if (std::log(rng.uniform_pos()) < after - before + log_rev - log_fwd) return true;
  state.coords = std::move(old_coords);
  return false;
}

HybridState apply_spr(const HybridState& state, NodeId prune_child,
                      NodeId target_child, double new_time) {
  MutableTree tree = MutableTree::from(state.topo(), state.coords);
  const NodeId np = tree.prune(prune_child);
  NodeId target = target_child;
  if (target == np) target = tree.sibling(prune_child);  // parent edge merged away
  tree.attach(prune_child, np, target, new_time);
  auto [topo, holding] = tree.to_ranked();
  HybridState out = state;
  out.topology = std::make_shared<const RankedTopology>(std::move(topo));
  for (int k = 0; k < state.topo().leaf_count() - 1; ++k) out.coords[k] = holding[k];
  return out;
}

SprOutcome spr_step(const CoalescentTargetBase& model, HybridState& state,
                    RngStream& rng) {
  const int n = state.topo().leaf_count();
  MutableTree tree = MutableTree::from(state.topo(), state.coords);

  const NodeId v0 = static_cast<NodeId>(rng.uniform_int(2 * n - 2));
  const int pick = rng.uniform_int(2 * n - 1);
  const NodeId target = pick == 2 * n - 2 ? -1 : static_cast<NodeId>(pick);
  const double u_time = rng.uniform_pos();  // drawn unconditionally: one
                                            // uniform per proposal keeps the
                                            // stream aligned across outcomes

  if (target >= 0 && tree.in_subtree(target, v0)) return {false, true, false};

  const NodeId p0 = tree.parent[v0];
  const NodeId sib0 = tree.sibling(v0);
  const double t0 = tree.time[p0];

  // Forward window from the current tree's times.
  double lo, hi = 0.0, t_new, log_q_fwd;
  if (target < 0) {
    const NodeId pruned_root = p0 == tree.root ? sib0 : tree.root;
    lo = std::max(tree.time[v0], tree.time[pruned_root]);
    t_new = lo - std::log(u_time);
    log_q_fwd = -(t_new - lo);
  } else {
    lo = std::max(tree.time[v0], tree.time[target]);
    hi = tree.time[tree.parent[target]];
    if (!(hi > lo)) return {false, true, false};
    t_new = lo + u_time * (hi - lo);
    log_q_fwd = -std::log(hi - lo);
  }

  const NodeId np = tree.prune(v0);
  NodeId attach_to = target;
  if (attach_to == np) attach_to = sib0;
  tree.attach(v0, np, attach_to, t_new);

  // Unique reverse move: reattach at the old position, which lies on the
  // ancestral line of the old sibling at time t0 in the proposed tree.
  double log_q_rev;
  {
    NodeId x = sib0;
    while (tree.parent[x] >= 0 && tree.time[tree.parent[x]] < t0) x = tree.parent[x];
    if (tree.parent[x] < 0) {
      const NodeId rev_root = x == np ? tree.sibling(v0) : x;
      const double rev_lo = std::max(tree.time[v0], tree.time[rev_root]);
      if (!(t0 > rev_lo)) return {false, true, false};
      log_q_rev = -(t0 - rev_lo);
    } else {
      const double rev_lo = std::max(tree.time[v0], tree.time[x]);
      const double rev_hi = tree.time[tree.parent[x]];
      log_q_rev = -std::log(rev_hi - rev_lo);
    }
  }

  auto [topo, holding] = tree.to_ranked();
  if (!model.mode_consistent(topo)) return {false, false, true};

  HybridState proposal = state;
  proposal.topology = std::make_shared<const RankedTopology>(std::move(topo));
  for (int k = 0; k < n - 1; ++k) proposal.coords[k] = holding[k];

  const double before = model.log_density(state);
  const double after = model.log_density(proposal);
  if (std::log(rng.uniform_pos()) < after - before + log_q_rev - log_q_fwd) {
    state = std::move(proposal);
    return {true, false, false};
  }
  return {false, false, false};
}

namespace {

void record_mh_event(EventTrace& trace, double time, MhKind kind, bool accepted,
                     const HybridState& state,
                     const std::shared_ptr<const RankedTopology>& topo_before) {
  Event e{time, EventKind::MhMove, -1, nullptr,
          std::make_shared<const MhPayload>(MhPayload{kind, accepted, state.coords})};
  if (state.topology != topo_before) e.topology = state.topology;
  trace.events.push_back(std::move(e));
}

}  // namespace

MhRunResult mh_run(const CoalescentTargetBase& model, const HybridState& init,
                   long sweeps, const MhConfig& config, std::uint64_t seed) {
  HybridState state = init;
  std::fill(state.vels.begin(), state.vels.end(), 0.0);

  MhRunResult out;
  out.trace.initial = state;
  RngStream rng(seed, 7001);
  double time = 0.0;
  for (long sweep = 0; sweep < sweeps; ++sweep) {
    if (model.has_theta()) {
      auto before = state.topology;
      ++out.stats.proposed_theta;
      const bool ok = theta_step(model, state, config.sigma_theta, rng);
      out.stats.accepted_theta += ok;
      record_mh_event(out.trace, time += 1.0, MhKind::Theta, ok, state, before);
    }
    {
      auto before = state.topology;
      ++out.stats.proposed_times;
      const bool ok = times_step(model, state, config.sigma_times, rng);
      out.stats.accepted_times += ok;
      record_mh_event(out.trace, time += 1.0, MhKind::Times, ok, state, before);
    }
    {
      auto before = state.topology;
      ++out.stats.proposed_spr;
      const auto res = spr_step(model, state, rng);
      out.stats.accepted_spr += res.accepted;
      out.stats.infeasible_spr += res.infeasible;
      out.stats.incompatible_spr += res.incompatible;
      record_mh_event(out.trace, time += 1.0, MhKind::Spr, res.accepted, state, before);
    }
  }
  out.trace.t_end = time;
  out.trace.events.push_back({time, EventKind::End, -1, nullptr, nullptr});
  return out;
}

MhRunResult hybrid_run(const CoalescentTargetBase& model, const HybridState& init,
                       double t_end, double kappa, const MhConfig& config,
                       std::uint64_t seed) {
  MhRunResult out;
  SimulateOptions opts;
  opts.t_end = t_end;
  opts.seed = seed;
  opts.interrupt_rate = kappa;
  MhStats* stats = &out.stats;
  const double sigma_theta = config.sigma_theta;
  opts.interrupt_kernel = [&model, stats, sigma_theta](HybridState& state,
                                                       RngStream& rng) -> MhPayload {
    // One uniformly chosen move per event: theta walk or SPR.
    if (rng.bernoulli(0.5)) {
      ++stats->proposed_theta;
      const bool ok = theta_step(model, state, sigma_theta, rng);
      stats->accepted_theta += ok;
      return {MhKind::Theta, ok, {}};
    }
    ++stats->proposed_spr;
    const auto res = spr_step(model, state, rng);
    stats->accepted_spr += res.accepted;
    stats->infeasible_spr += res.infeasible;
    stats->incompatible_spr += res.incompatible;
    return {MhKind::Spr, res.accepted, {}};
  };
  out.trace = simulate(model, init, opts);
  return out;
}

MhConfig tune_mh(const CoalescentTargetBase& model, HybridState& state,
                 long warmup_sweeps, MhConfig config, std::uint64_t seed) {
  RngStream rng(seed, 7002);
  constexpr long kBatch = 40;
  long acc_theta = 0, acc_times = 0;
  for (long sweep = 1; sweep <= warmup_sweeps; ++sweep) {
    if (model.has_theta()) acc_theta += theta_step(model, state, config.sigma_theta, rng);
    acc_times += times_step(model, state, config.sigma_times, rng);
    spr_step(model, state, rng);
    if (sweep % kBatch == 0) {
      const auto adjust = [](double sigma, double rate) {
        return std::clamp(sigma * std::exp(rate - 0.25), 1e-6, 1e6);
      };
      config.sigma_theta = adjust(config.sigma_theta, static_cast<double>(acc_theta) / kBatch);
      config.sigma_times = adjust(config.sigma_times, static_cast<double>(acc_times) / kBatch);
      acc_theta = acc_times = 0;
    }
  }
  return config;
}

}  // namespace zigzag
