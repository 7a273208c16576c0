#include "zigzag/tau.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace zigzag {

namespace {

double choose2(double k) { return k * (k - 1) / 2.0; }

}  // namespace

RankedTopology::RankedTopology(int leaf_count, std::vector<MergerPair> mergers)
    : n_(leaf_count), mergers_(std::move(mergers)) {
  if (n_ < 2) throw std::invalid_argument("ranked topology needs at least 2 leaves");
  if (static_cast<int>(mergers_.size()) != n_ - 1)
    throw std::invalid_argument("ranked topology needs exactly n-1 mergers");

  const int num_nodes = 2 * n_ - 1;
  parent_.assign(num_nodes, -1);
  least_leaf_.assign(num_nodes, -1);
  for (int v = 0; v < n_; ++v) least_leaf_[v] = v;

  std::vector<bool> used(num_nodes, false);
  for (int k = 0; k < n_ - 1; ++k) {
    auto& m = mergers_[k];
    for (NodeId v : {m.first, m.second}) {
      if (v < 0 || v >= n_ + k)
        throw std::invalid_argument("merger child must be a leaf or an earlier merger");
      if (used[v]) throw std::invalid_argument("node used as a child twice");
      used[v] = true;
      parent_[v] = merger_node(k);
    }
    if (m.first == m.second) throw std::invalid_argument("merger children must differ");
    least_leaf_[merger_node(k)] = std::min(least_leaf_[m.first], least_leaf_[m.second]);
    if (least_leaf_[m.first] > least_leaf_[m.second]) std::swap(m.first, m.second);
  }
  // Every non-root node consumed exactly once implies the final merger's
  // subtree is the full leaf set.
  for (int v = 0; v < num_nodes - 1; ++v) {
    if (!used[v]) throw std::invalid_argument("node never merged");
  }
}

RankedTopology RankedTopology::caterpillar(int leaf_count) {
  std::vector<MergerPair> mergers;
  mergers.reserve(leaf_count - 1);
  NodeId last = 0;
  for (int k = 0; k < leaf_count - 1; ++k) {
    mergers.push_back({last, static_cast<NodeId>(k + 1)});
    last = static_cast<NodeId>(leaf_count + k);
  }
  return RankedTopology(leaf_count, std::move(mergers));
}

bool RankedTopology::nested_at(int k) const {
  if (k < 1 || k > n_ - 2) return false;
  return contains(k, merger_node(k - 1));
}

std::uint64_t RankedTopology::id_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(n_));
  for (const auto& m : mergers_) {
    mix(static_cast<std::uint64_t>(m.first));
    mix(static_cast<std::uint64_t>(m.second));
  }
  return h;
}

std::vector<std::vector<int>> RankedTopology::leaf_sets() const {
  std::vector<std::vector<int>> sets(2 * n_ - 1);
  for (int v = 0; v < n_; ++v) sets[v] = {v};
  for (int k = 0; k < n_ - 1; ++k) {
    const auto& m = mergers_[k];
    auto& out = sets[merger_node(k)];
    std::merge(sets[m.first].begin(), sets[m.first].end(),
               sets[m.second].begin(), sets[m.second].end(),
               std::back_inserter(out));
  }
  return sets;
}

RankedTopology swap_mergers(const RankedTopology& E, int k) {
  const int n = E.leaf_count();
  if (k < 1 || k > n - 2 || E.nested_at(k))
    throw std::invalid_argument("swap requires adjacent non-nested mergers");
  std::vector<MergerPair> mergers = E.mergers();
  std::swap(mergers[k - 1], mergers[k]);
  // Exchanging ranks renames the two nodes; later mergers referencing them
  // must follow. Neither of the swapped pairs can reference the other by the
  // non-nested precondition.
  const NodeId a = E.merger_node(k - 1);
  const NodeId b = E.merger_node(k);
  for (int j = k + 1; j < n - 1; ++j) {
    for (NodeId* v : {&mergers[j].first, &mergers[j].second}) {
      if (*v == a)
        *v = b;
      else if (*v == b)
        *v = a;
    }
  }
  return RankedTopology(n, std::move(mergers));
}

namespace {

// Shared pivot body. The nested merger k has children {node(k-1), sibling};
// merger k-1 has children {low, high} ordered by least element. The pivot
// joins `keep` with the sibling first, then merges that node with `lift`.
RankedTopology pivot(const RankedTopology& E, int k, bool keep_low) {
  const int n = E.leaf_count();
  if (k < 1 || k > n - 2 || !E.nested_at(k))
    throw std::invalid_argument("pivot requires adjacent nested mergers");
  const MergerPair inner = E.merger(k - 1);  // canonical: first = lower least
  const NodeId low = inner.first;
  const NodeId high = inner.second;
  const NodeId prev = E.merger_node(k - 1);
  const MergerPair outer = E.merger(k);
  const NodeId sibling = outer.first == prev ? outer.second : outer.first;

  std::vector<MergerPair> mergers = E.mergers();
  const NodeId keep = keep_low ? low : high;
  const NodeId lift = keep_low ? high : low;
  mergers[k - 1] = {keep, sibling};
  mergers[k] = {prev, lift};
  return RankedTopology(n, std::move(mergers));
}

}  // namespace

RankedTopology pivot_down(const RankedTopology& E, int k) { return pivot(E, k, true); }
RankedTopology pivot_up(const RankedTopology& E, int k) { return pivot(E, k, false); }

BoundaryType classify_boundary(const RankedTopology& E, int coord, int dim) {
  if (coord == 0) return BoundaryType::Type1;
  if (dim == E.leaf_count() && coord == dim - 1) return BoundaryType::Type1;
  return E.nested_at(coord) ? BoundaryType::Type3 : BoundaryType::Type2;
}

EdgeTable EdgeTable::build(const RankedTopology& E) {
  EdgeTable table;
  table.leaf_count = E.leaf_count();
  const int num_edges = 2 * E.leaf_count() - 2;
  table.edges.resize(num_edges);
  for (NodeId v = 0; v < num_edges; ++v) {
    Edge& e = table.edges[v];
    e.child = v;
    e.parent = E.parent(v);
    e.child_rank = E.node_rank(v);
    e.parent_rank = E.node_rank(e.parent);
  }
  return table;
}

std::vector<double> node_times(std::span<const double> holding_times) {
  std::vector<double> times(holding_times.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < holding_times.size(); ++k) {
    acc += holding_times[k];
    times[k] = acc;
  }
  return times;
}

double edge_length(const Edge& e, std::span<const double> merger_times) {
  const double child_time = e.child_rank < 0 ? 0.0 : merger_times[e.child_rank];
  return merger_times[e.parent_rank] - child_time;
}

double edge_velocity(const Edge& e, std::span<const double> vels) {
  double v = 0.0;
  for (int j = e.child_rank + 1; j <= e.parent_rank; ++j) v += vels[j];
  return v;
}

double log_prior(int leaf_count, std::span<const double> holding_times) {
  double acc = 0.0;
  for (int k = 0; k < leaf_count - 1; ++k)
    acc -= choose2(leaf_count - k) * holding_times[k];
  return acc;
}

std::vector<double> prior_gradient(int leaf_count, std::span<const double> holding_times) {
  std::vector<double> grad(holding_times.size());
  for (int k = 0; k < leaf_count - 1; ++k) grad[k] = -choose2(leaf_count - k);
  return grad;
}

CoalescentTree simulate_coalescent(int leaf_count, RngStream& rng) {
  std::vector<NodeId> lineages(leaf_count);
  for (int v = 0; v < leaf_count; ++v) lineages[v] = v;
  std::vector<MergerPair> mergers;
  std::vector<double> holding_times;
  mergers.reserve(leaf_count - 1);
  holding_times.reserve(leaf_count - 1);
  for (int k = 0; k < leaf_count - 1; ++k) {
    const int m = static_cast<int>(lineages.size());
    holding_times.push_back(rng.exponential(choose2(m)));
    int i = rng.uniform_int(m);
    int j = rng.uniform_int(m - 1);
    if (j >= i) ++j;
    if (i > j) std::swap(i, j);
    mergers.push_back({lineages[i], lineages[j]});
    lineages[i] = static_cast<NodeId>(leaf_count + k);
    lineages.erase(lineages.begin() + j);
  }
  return {RankedTopology(leaf_count, std::move(mergers)), std::move(holding_times)};
}

namespace {

void enumerate_rec(int leaf_count, std::vector<NodeId>& lineages,
                   std::vector<MergerPair>& mergers,
                   std::vector<RankedTopology>& out) {
  const int m = static_cast<int>(lineages.size());
  if (m == 1) {
    out.emplace_back(leaf_count, mergers);
    return;
  }
  const int k = static_cast<int>(mergers.size());
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      mergers.push_back({lineages[i], lineages[j]});
      std::vector<NodeId> next = lineages;
      next[i] = static_cast<NodeId>(leaf_count + k);
      next.erase(next.begin() + j);
      enumerate_rec(leaf_count, next, mergers, out);
      mergers.pop_back();
    }
  }
}

}  // namespace

std::vector<RankedTopology> enumerate_ranked_topologies(int leaf_count) {
  std::vector<NodeId> lineages(leaf_count);
  for (int v = 0; v < leaf_count; ++v) lineages[v] = v;
  std::vector<MergerPair> mergers;
  std::vector<RankedTopology> out;
  enumerate_rec(leaf_count, lineages, mergers, out);
  return out;
}

namespace {

void newick_rec(const RankedTopology& E, const std::vector<double>& times,
                NodeId v, std::ostringstream& os) {
  const int rank = E.node_rank(v);
  if (rank < 0) {
    os << (v + 1);
  } else {
    const auto& m = E.merger(rank);
    os << '(';
    newick_rec(E, times, m.first, os);
    os << ',';
    newick_rec(E, times, m.second, os);
    os << ')';
  }
  const NodeId p = E.parent(v);
  if (p >= 0) {
    const double child_time = rank < 0 ? 0.0 : times[rank];
    os << ':' << times[E.node_rank(p)] - child_time;
  }
}

}  // namespace

std::string newick(const RankedTopology& E, std::span<const double> holding_times) {
  const auto times = node_times(holding_times);
  std::ostringstream os;
  newick_rec(E, times, E.root(), os);
  os << ';';
  return os.str();
}

std::string topology_log_line(const RankedTopology& E) {
  std::ostringstream os;
  os << "id " << std::hex << E.id_hash() << std::dec << " mergers";
  for (const auto& m : E.mergers()) os << " (" << m.first << ',' << m.second << ')';
  return os.str();
}

}  // namespace zigzag
