#include "zigzag/ism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace zigzag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// a subset-of b for sorted vectors.
bool subset(const std::vector<int>& a, const std::vector<int>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

bool disjoint(const std::vector<int>& a, const std::vector<int>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else
      return false;
  }
  return true;
}

int poisson(double mean, RngStream& rng) {
  // Counting Exp(1) arrivals; fine at the event counts seen here.
  int k = 0;
  double acc = rng.exponential(1.0);
  while (acc < mean) {
    ++k;
    acc += rng.exponential(1.0);
  }
  return k;
}

}  // namespace

IsmDataset::IsmDataset(int leaf_count, std::vector<std::vector<double>> leaf_mutations)
    : leaf_count_(leaf_count), leaf_mutations_(std::move(leaf_mutations)) {
  if (leaf_count_ < 2) throw DataError("dataset needs at least 2 leaves");
  if (static_cast<int>(leaf_mutations_.size()) != leaf_count_)
    throw DataError("one mutation list per leaf required");

  std::map<double, std::vector<int>> carriers;
  for (int leaf = 0; leaf < leaf_count_; ++leaf) {
    auto& list = leaf_mutations_[leaf];
    std::sort(list.begin(), list.end());
    if (std::adjacent_find(list.begin(), list.end()) != list.end())
      throw DataError("leaf carries the same mutation twice");
    for (double coord : list) carriers[coord].push_back(leaf);
  }
  mutations_.reserve(carriers.size());
  for (auto& [coord, leaves] : carriers) {
    if (static_cast<int>(leaves.size()) == leaf_count_)
      throw DataError("mutation carried by every leaf cannot sit on any edge");
    mutations_.push_back({coord, std::move(leaves)});
  }
  for (std::size_t a = 0; a < mutations_.size(); ++a) {
    for (std::size_t b = a + 1; b < mutations_.size(); ++b) {
      const auto& ca = mutations_[a].carriers;
      const auto& cb = mutations_[b].carriers;
      if (!subset(ca, cb) && !subset(cb, ca) && !disjoint(ca, cb))
        throw DataError("crossing carrier sets violate the infinite-sites model");
    }
  }
}

int IsmDataset::distinct_types() const {
  std::set<std::vector<double>> types(leaf_mutations_.begin(), leaf_mutations_.end());
  return static_cast<int>(types.size());
}

DatasetSummary summarize(const IsmDataset& data) {
  return {data.leaf_count(), data.distinct_types(), data.total_mutations()};
}

MutationAssignment assign_mutations(const RankedTopology& E, const IsmDataset& data) {
  MutationAssignment out;
  out.edge_counts.assign(2 * E.leaf_count() - 2, 0);
  const auto sets = E.leaf_sets();
  for (const auto& mutation : data.mutations()) {
    // Walk up from one carrier until the subtree is at least as large; the
    // mutation fits only if that subtree matches the carrier set exactly.
    NodeId v = mutation.carriers.front();
    while (sets[v].size() < mutation.carriers.size()) v = E.parent(v);
    if (sets[v] != mutation.carriers) return out;  // inconsistent
    ++out.edge_counts[v];
    ++out.total;
  }
  const auto& first = E.merger(0);
  out.first_merger_count = out.edge_counts[first.first] + out.edge_counts[first.second];
  out.consistent = true;
  return out;
}

IsmTarget::IsmTarget(std::shared_ptr<const IsmDataset> data,
                     std::shared_ptr<const ThetaPrior> prior)
    : CoalescentTargetBase(data->leaf_count(), /*has_theta=*/true),
      data_(std::move(data)),
      prior_(std::move(prior)) {}

const IsmTarget::TopoCache& IsmTarget::cache_for(const HybridState& state) const {
  if (cache_.key != state.topology &&
      !(cache_.key && *cache_.key == state.topo())) {
    cache_.key = state.topology;
    cache_.edges = EdgeTable::build(state.topo());
    cache_.assignment = assign_mutations(state.topo(), *data_);
    cache_.mutated.clear();
    for (int v = 0; v < cache_.edges.size(); ++v)
      if (cache_.assignment.edge_counts[v] > 0) cache_.mutated.push_back(v);
  } else {
    cache_.key = state.topology;
  }
  return cache_;
}

bool IsmTarget::mode_consistent(const RankedTopology& E) const {
  return assign_mutations(E, *data_).consistent;
}

double IsmTarget::log_density(const HybridState& state) const {
  ++counters_.density_evals;
  const auto& cache = cache_for(state);
  if (!cache.assignment.consistent) return kNegInf;
  const int n = leaf_count_;
  const double theta = state.coords[theta_coord()];
  if (theta < 0.0) return kNegInf;
  const auto times = node_times(std::span(state.coords).first(n - 1));
  double acc = prior_->log_density(theta);
  for (NodeId v : cache.mutated) {
    const double len = edge_length(cache.edges.edges[v], times);
    const double mean = theta * len / 2.0;
    if (mean <= 0.0) return kNegInf;
    acc += cache.assignment.edge_counts[v] * std::log(mean);
  }
  for (int j = 0; j < n - 1; ++j)
    acc -= (n - j) * (n - 1 - j + theta) / 2.0 * state.coords[j];
  return acc;
}

double IsmTarget::flip_rate(const HybridState& state, int i) const {
  ++counters_.rate_evals;
  const auto& cache = cache_for(state);
  const int n = leaf_count_;
  const double theta = state.coords[theta_coord()];
  const double v = state.vels[i];
  double slope;
  if (i < theta_coord()) {
    const auto times = node_times(std::span(state.coords).first(n - 1));
    double mutation_pull = 0.0;
    for (NodeId u : cache.mutated) {
      const Edge& e = cache.edges.edges[u];
      if (!e.spans(i)) continue;
      mutation_pull += cache.assignment.edge_counts[u] / edge_length(e, times);
    }
    slope = (n - i) * (n - 1 - i + theta) / 2.0 - mutation_pull;
  } else {
    double branch_sum = 0.0;
    for (int j = 0; j < n - 1; ++j) branch_sum += (n - j) / 2.0 * state.coords[j];
    const double mutation_pull =
        cache.assignment.total > 0 ? cache.assignment.total / theta : 0.0;
    slope = branch_sum - mutation_pull - prior_->dlog(theta);
  }
  const double rate = v * slope;
  return rate > 0.0 ? rate : 0.0;
}

double IsmTarget::flip_bound(const HybridState& state, int i, double window) const {
  ++counters_.bound_evals;
  const auto& cache = cache_for(state);
  const int n = leaf_count_;
  const double theta = state.coords[theta_coord()];
  const double v = state.vels[i];
  const double v_theta = state.vels[theta_coord()];
  if (v == 0.0) return 0.0;

  // Worst-case end-of-window substitutions: shifts are taken positive-part
  // when the coordinate being bounded moves up, negative-part when it moves
  // down, which extremizes every term against the velocity sign.
  const auto pm = [&](double x) { return v > 0.0 ? std::max(x, 0.0) : std::min(x, 0.0); };

  double slope;
  if (i < theta_coord()) {
    const auto times = node_times(std::span(state.coords).first(n - 1));
    double mutation_pull = 0.0;
    for (NodeId u : cache.mutated) {
      const Edge& e = cache.edges.edges[u];
      if (!e.spans(i)) continue;
      const double len =
          edge_length(e, times) + pm(edge_velocity(e, state.vels) * window);
      if (len <= 0.0)
        throw InvariantViolation("mutated edge may vanish inside the window");
      mutation_pull += cache.assignment.edge_counts[u] / len;
    }
    slope = (n - i) * (n - 1 - i + theta + pm(v_theta * window)) / 2.0 - mutation_pull;
  } else {
    double branch_sum = 0.0;
    for (int j = 0; j < n - 1; ++j)
      branch_sum += (n - j) / 2.0 * (state.coords[j] + pm(state.vels[j] * window));
    double mutation_pull = 0.0;
    if (cache.assignment.total > 0) {
      const double theta_end = theta + v_theta * window;
      if (theta_end <= 0.0)
        throw InvariantViolation("theta may vanish inside the window");
      mutation_pull = cache.assignment.total / theta_end;
    }
    const double lo = std::max(theta + std::min(v_theta * window, 0.0), 0.0);
    const double hi = theta + std::max(v_theta * window, 0.0);
    const auto [dmin, dmax] = prior_->dlog_range(std::max(lo, 1e-300), hi);
    const double dext = v > 0.0 ? dmin : dmax;
    slope = branch_sum - mutation_pull - dext;
  }
  const double bound = v * slope;
  return bound > 0.0 ? bound : 0.0;
}

bool IsmTarget::boundary_guarded(const HybridState& state, int coord) const {
  const auto& cache = cache_for(state);
  if (coord == theta_coord())
    return cache.assignment.total > 0 || prior_->vanishes_at_zero();
  if (coord == 0) return cache.assignment.first_merger_count > 0;
  if (!state.topo().nested_at(coord)) return false;
  // Type 3 face: guarded when the shorter child branch of the later merger
  // carries mutations.
  const auto times = node_times(std::span(state.coords).first(leaf_count_ - 1));
  const auto& pair = state.topo().merger(coord);
  const double la = edge_length(cache.edges.edges[pair.first], times);
  const double lb = edge_length(cache.edges.edges[pair.second], times);
  const NodeId shorter = la <= lb ? pair.first : pair.second;
  return cache.assignment.edge_counts[shorter] > 0;
}

void IsmTarget::validate_jump(const HybridState& state, int,
                              const RankedTopology& landing) const {
  const auto assignment = assign_mutations(landing, *data_);
  if (!assignment.consistent)
    throw InvariantViolation("boundary jump landed in an inconsistent topology");
  // Any zero-length edge of the landing tree must be mutation-free.
  const auto times = node_times(std::span(state.coords).first(leaf_count_ - 1));
  const auto edges = EdgeTable::build(landing);
  for (int u = 0; u < edges.size(); ++u) {
    if (assignment.edge_counts[u] > 0 && edge_length(edges.edges[u], times) <= 0.0)
      throw InvariantViolation("boundary jump landed on a mutated zero-length edge");
  }
}

IsmDataset simulate_ism_data(const RankedTopology& E,
                             std::span<const double> holding_times, double theta,
                             RngStream& rng) {
  const int n = E.leaf_count();
  std::vector<std::vector<double>> leaf_mutations(n);
  if (theta > 0.0) {
    const auto times = node_times(holding_times);
    const auto sets = E.leaf_sets();
    const auto edges = EdgeTable::build(E);
    for (int u = 0; u < edges.size(); ++u) {
      const double mean = theta * edge_length(edges.edges[u], times) / 2.0;
      const int count = poisson(mean, rng);
      for (int k = 0; k < count; ++k) {
        const double coord = rng.uniform_pos();
        for (int leaf : sets[u]) leaf_mutations[leaf].push_back(coord);
      }
    }
  }
  return IsmDataset(n, std::move(leaf_mutations));
}

namespace {

// Binary ranked tree realizing every carrier set as a clade: carriers are
// laminar, so merging the clusters inside each carrier (smallest first)
// always succeeds.
RankedTopology perfect_phylogeny(const IsmDataset& data) {
  const int n = data.leaf_count();
  std::vector<std::vector<int>> carriers;
  for (const auto& m : data.mutations())
    if (m.carriers.size() >= 2) carriers.push_back(m.carriers);
  std::sort(carriers.begin(), carriers.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  carriers.erase(std::unique(carriers.begin(), carriers.end()), carriers.end());

  std::vector<NodeId> cluster(n);      // current cluster root per leaf-set rep
  std::vector<int> rep_of(n);          // leaf -> index into `cluster`
  std::vector<std::vector<int>> members(n);
  for (int leaf = 0; leaf < n; ++leaf) {
    cluster[leaf] = leaf;
    rep_of[leaf] = leaf;
    members[leaf] = {leaf};
  }
  std::vector<MergerPair> mergers;
  auto merge_all = [&](std::vector<int> reps) {
    while (reps.size() > 1) {
      const int a = reps[reps.size() - 2];
      const int b = reps.back();
      reps.pop_back();
      mergers.push_back({cluster[a], cluster[b]});
      cluster[a] = static_cast<NodeId>(n + static_cast<int>(mergers.size()) - 1);
      for (int leaf : members[b]) rep_of[leaf] = a;
      members[a].insert(members[a].end(), members[b].begin(), members[b].end());
      reps[reps.size() - 1] = a;
    }
  };
  auto reps_of = [&](const std::vector<int>& leaves) {
    std::vector<int> reps;
    for (int leaf : leaves) {
      const int r = rep_of[leaf];
      if (std::find(reps.begin(), reps.end(), r) == reps.end()) reps.push_back(r);
    }
    return reps;
  };
  for (const auto& carrier : carriers) merge_all(reps_of(carrier));
  std::vector<int> all(n);
  for (int leaf = 0; leaf < n; ++leaf) all[leaf] = leaf;
  merge_all(reps_of(all));
  return RankedTopology(n, std::move(mergers));
}

}  // namespace

CoalescentTree initial_ism_tree(const IsmDataset& data, RngStream& rng, int max_tries) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    CoalescentTree tree = simulate_coalescent(data.leaf_count(), rng);
    if (assign_mutations(tree.topology, data).consistent) return tree;
  }
  const int n = data.leaf_count();
  std::vector<double> times(n - 1);
  for (int k = 0; k < n - 1; ++k) {
    const double m = static_cast<double>(n - k);
    times[k] = 2.0 / (m * (m - 1));
  }
  return {perfect_phylogeny(data), std::move(times)};
}

}  // namespace zigzag
