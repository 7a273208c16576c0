#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zigzag/rng.hpp"

namespace zigzag {

// Node ids in a ranked tree on n leaves: leaves are 0..n-1, the node created
// by the k-th merger (k = 0..n-2) is n+k, so the root is 2n-2.
using NodeId = std::int32_t;

struct MergerPair {
  NodeId first = -1;   // entry whose subtree holds the smaller least leaf
  NodeId second = -1;

  friend bool operator==(const MergerPair&, const MergerPair&) = default;
};

// Merger-ordered encoding of an ultrametric binary tree shape: the k-th pair
// lists the two children of the k-th merger. Immutable after construction;
// the rearrangement operators return new values.
class RankedTopology {
 public:
  RankedTopology(int leaf_count, std::vector<MergerPair> mergers);

  // Mergers (0,1), (01,2), (012,3), ...
  static RankedTopology caterpillar(int leaf_count);

  int leaf_count() const { return n_; }
  int merger_count() const { return n_ - 1; }
  NodeId root() const { return 2 * n_ - 2; }
  NodeId merger_node(int k) const { return static_cast<NodeId>(n_ + k); }

  // Rank of the merger that created a node; -1 for leaves.
  int node_rank(NodeId v) const { return v < n_ ? -1 : v - n_; }

  const MergerPair& merger(int k) const { return mergers_[k]; }
  const std::vector<MergerPair>& mergers() const { return mergers_; }

  // Parent node of v; -1 for the root.
  NodeId parent(NodeId v) const { return parent_[v]; }

  // Smallest leaf label below a node.
  int least_leaf(NodeId v) const { return least_leaf_[v]; }

  // Whether the node created by merger k-1 is a child of merger k. Boundary
  // t at coordinate k is a triple merger exactly in this case.
  bool nested_at(int k) const;

  bool contains(int k, NodeId v) const {
    return mergers_[k].first == v || mergers_[k].second == v;
  }

  // Stable 64-bit FNV-1a hash of the merger id sequence; used as the mode id
  // in traces and logs.
  std::uint64_t id_hash() const;

  // Sorted leaf labels below each node, indexed by node id.
  std::vector<std::vector<int>> leaf_sets() const;

  friend bool operator==(const RankedTopology& a, const RankedTopology& b) {
    return a.n_ == b.n_ && a.mergers_ == b.mergers_;
  }

 private:
  int n_;
  std::vector<MergerPair> mergers_;    // size n-1
  std::vector<NodeId> parent_;         // size 2n-1, root -> -1
  std::vector<int> least_leaf_;        // size 2n-1
};

// Exchanges the order of mergers k-1 and k. Requires 1 <= k <= n-2 and that
// the mergers are not nested (the boundary t_{k} = 0 is of type 2).
// Involution: swap_mergers(swap_mergers(E, k), k) == E.
RankedTopology swap_mergers(const RankedTopology& E, int k);

// Nearest-neighbor interchanges between merger k and merger k-1 when nested
// (type 3 boundary). pivot_down keeps the lower-least-element child of merger
// k-1 in the earlier merger, pivot_up the higher one.
RankedTopology pivot_up(const RankedTopology& E, int k);
RankedTopology pivot_down(const RankedTopology& E, int k);

enum class BoundaryType { Type1, Type2, Type3 };

// Classifies the orthant face {coords[coord] = 0} for a state with `dim`
// coordinates. When dim == leaf_count the last coordinate is the scalar
// mutation rate, whose zero face is a type 1 boundary like coord == 0.
BoundaryType classify_boundary(const RankedTopology& E, int coord, int dim);

// One edge of the rooted graphical tree. The edge spans holding-time
// coordinates {child_rank+1, ..., parent_rank}; its length is the sum of the
// spanned holding times.
struct Edge {
  NodeId child = -1;
  NodeId parent = -1;
  int child_rank = -1;   // -1 for leaf children
  int parent_rank = -1;

  bool spans(int coord) const { return child_rank < coord && coord <= parent_rank; }
};

// All 2n-2 edges, indexed by child node id.
struct EdgeTable {
  int leaf_count = 0;
  std::vector<Edge> edges;

  static EdgeTable build(const RankedTopology& E);

  int size() const { return static_cast<int>(edges.size()); }
};

// Cumulative merger times t_0, t_0+t_1, ...; index by merger rank.
std::vector<double> node_times(std::span<const double> holding_times);

double edge_length(const Edge& e, std::span<const double> merger_times);
double edge_velocity(const Edge& e, std::span<const double> vels);

// Coalescent density of the holding times: each pair of lineages merges at
// rate 1, so t_k ~ Exp(C(n-k, 2)) independently and the ranked topology is
// uniform. log_prior omits the (constant) topology factor.
double log_prior(int leaf_count, std::span<const double> holding_times);
std::vector<double> prior_gradient(int leaf_count, std::span<const double> holding_times);

struct CoalescentTree {
  RankedTopology topology;
  std::vector<double> holding_times;
};

CoalescentTree simulate_coalescent(int leaf_count, RngStream& rng);

// All ranked topologies on n leaves (1, 3, 18, 180, ... for n = 2, 3, 4, 5).
std::vector<RankedTopology> enumerate_ranked_topologies(int leaf_count);

// Newick text with branch lengths, leaves labeled 1..n.
std::string newick(const RankedTopology& E, std::span<const double> holding_times);

// Run-log line: "id <hash> mergers (a,b)(c,d)...".
std::string topology_log_line(const RankedTopology& E);

}  // namespace zigzag
