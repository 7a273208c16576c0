#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "support/stats.hpp"
#include "zigzag/tau.hpp"

using namespace zigzag;

namespace {

// Leaf-set form of a merger sequence, for comparing against the tree figures.
std::vector<std::pair<std::vector<int>, std::vector<int>>> leaf_set_pairs(
    const RankedTopology& E) {
  const auto sets = E.leaf_sets();
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  for (const auto& m : E.mergers()) out.push_back({sets[m.first], sets[m.second]});
  return out;
}

std::vector<int> L(std::initializer_list<int> xs) { return std::vector<int>(xs); }

}  // namespace

TEST_CASE("construction validates the merger sequence") {
  CHECK_THROWS(RankedTopology(3, {{0, 1}, {0, 3}}));        // leaf 0 used twice
  CHECK_THROWS(RankedTopology(3, {{0, 4}, {3, 2}}));        // forward reference
  CHECK_THROWS(RankedTopology(3, {{0, 0}, {3, 2}}));        // self-merger
  CHECK_NOTHROW(RankedTopology(3, {{0, 1}, {3, 2}}));
  CHECK_NOTHROW(RankedTopology(2, {{1, 0}}));
}

TEST_CASE("pairs are ordered by least leaf") {
  const RankedTopology E(4, {{3, 2}, {4, 1}, {5, 0}});
  CHECK(E.merger(0).first == 2);
  CHECK(E.merger(0).second == 3);
  CHECK(E.least_leaf(4) == 2);
  CHECK(E.least_leaf(5) == 1);
}

TEST_CASE("swap matches the four-leaf figure") {
  // ({3,4},{1,2},{{1,2},{3,4}}) --s_2--> ({1,2},{3,4},{{1,2},{3,4}}), with
  // leaves relabeled to 0-based and the operator indexed by the later merger.
  const RankedTopology E(4, {{2, 3}, {0, 1}, {5, 4}});
  const auto S = swap_mergers(E, 1);
  const auto pairs = leaf_set_pairs(S);
  CHECK(pairs[0] == std::pair{L({0}), L({1})});
  CHECK(pairs[1] == std::pair{L({2}), L({3})});
  CHECK(pairs[2] == std::pair{L({0, 1}), L({2, 3})});
}

TEST_CASE("swap is an involution and preserves the pair multiset") {
  for (const auto& E : enumerate_ranked_topologies(4)) {
    for (int k = 1; k <= 2; ++k) {
      if (E.nested_at(k)) continue;
      const auto S = swap_mergers(E, k);
      CHECK(swap_mergers(S, k) == E);
      auto a = leaf_set_pairs(E);
      auto b = leaf_set_pairs(S);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("pivots match the three-leaf figure") {
  // E_3 = ({1,2},{{1,2},3}); pivot_up -> ({2,3},{1,{2,3}}),
  // pivot_down -> ({1,3},{{1,3},2}).
  const RankedTopology E(3, {{0, 1}, {3, 2}});
  const auto up = leaf_set_pairs(pivot_up(E, 1));
  CHECK(up[0] == std::pair{L({1}), L({2})});
  CHECK(up[1] == std::pair{L({0}), L({1, 2})});
  const auto down = leaf_set_pairs(pivot_down(E, 1));
  CHECK(down[0] == std::pair{L({0}), L({2})});
  CHECK(down[1] == std::pair{L({0, 2}), L({1})});
}

TEST_CASE("the three orthants at a type 3 line form one pivot orbit") {
  const auto all = enumerate_ranked_topologies(3);
  REQUIRE(all.size() == 3);
  const RankedTopology E(3, {{0, 1}, {3, 2}});
  std::set<std::uint64_t> orbit{E.id_hash(), pivot_up(E, 1).id_hash(),
                                pivot_down(E, 1).id_hash()};
  std::set<std::uint64_t> expected;
  for (const auto& T : all) expected.insert(T.id_hash());
  CHECK(orbit == expected);
}

TEST_CASE("operator preconditions are enforced") {
  const RankedTopology cat = RankedTopology::caterpillar(4);
  CHECK(cat.nested_at(1));
  CHECK_THROWS(swap_mergers(cat, 1));  // nested: swap invalid
  const RankedTopology E(4, {{2, 3}, {0, 1}, {5, 4}});
  CHECK(!E.nested_at(1));
  CHECK_THROWS(pivot_up(E, 1));  // not nested: pivot invalid
  CHECK_THROWS(swap_mergers(cat, 0));
  CHECK_THROWS(swap_mergers(cat, 3));
}

TEST_CASE("boundary classification") {
  const auto cat = RankedTopology::caterpillar(4);
  // Coordinates here are 0-based; dim = n means the last coordinate is the
  // mutation rate.
  CHECK(classify_boundary(cat, 0, 4) == BoundaryType::Type1);
  CHECK(classify_boundary(cat, 3, 4) == BoundaryType::Type1);  // theta
  CHECK(classify_boundary(cat, 2, 4) == BoundaryType::Type3);  // caterpillar nesting
  const RankedTopology E(4, {{2, 3}, {0, 1}, {5, 4}});
  CHECK(classify_boundary(E, 1, 4) == BoundaryType::Type2);
  // Without a theta coordinate the last holding time is a type 3 face.
  CHECK(classify_boundary(cat, 2, 3) == BoundaryType::Type3);
}

TEST_CASE("operator closure on all topologies up to n = 5") {
  for (int n = 3; n <= 5; ++n) {
    for (const auto& E : enumerate_ranked_topologies(n)) {
      for (int k = 1; k <= n - 2; ++k) {
        if (E.nested_at(k)) {
          CHECK_NOTHROW(pivot_up(E, k));
          CHECK_NOTHROW(pivot_down(E, k));
        } else {
          CHECK_NOTHROW(swap_mergers(E, k));
        }
      }
    }
  }
}

TEST_CASE("ranked topology counts for n = 2, 3, 4") {
  CHECK(enumerate_ranked_topologies(2).size() == 1);
  CHECK(enumerate_ranked_topologies(3).size() == 3);
  CHECK(enumerate_ranked_topologies(4).size() == 18);
}

TEST_CASE("edge table basics") {
  SUBCASE("two leaves") {
    const auto E = RankedTopology::caterpillar(2);
    const auto table = EdgeTable::build(E);
    REQUIRE(table.size() == 2);
    const std::vector<double> t{0.7};
    const auto times = node_times(t);
    for (const auto& e : table.edges) {
      CHECK(e.spans(0));
      CHECK(edge_length(e, times) == doctest::Approx(0.7));
    }
  }
  SUBCASE("caterpillar leaf-4 edge spans every epoch") {
    const auto E = RankedTopology::caterpillar(4);
    const auto table = EdgeTable::build(E);
    const auto& leaf3 = table.edges[3];
    CHECK(leaf3.spans(0));
    CHECK(leaf3.spans(1));
    CHECK(leaf3.spans(2));
    CHECK(leaf3.parent == E.root());
  }
}

TEST_CASE("total edge length counts lineages per epoch") {
  RngStream rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + rng.uniform_int(6);
    const auto tree = simulate_coalescent(n, rng);
    const auto table = EdgeTable::build(tree.topology);
    const auto times = node_times(tree.holding_times);
    double total = 0.0;
    for (const auto& e : table.edges) total += edge_length(e, times);
    double expected = 0.0;
    for (int j = 0; j < n - 1; ++j) expected += (n - j) * tree.holding_times[j];
    CHECK(total == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("log prior values and gradient") {
  CHECK(log_prior(2, std::vector<double>{1.0}) == doctest::Approx(-1.0));
  CHECK(log_prior(3, std::vector<double>{1.0 / 3, 1.0}) == doctest::Approx(-2.0));

  const std::vector<double> t{0.3, 0.9, 0.4, 1.3};
  const auto grad = prior_gradient(5, t);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    auto lo = t, hi = t;
    lo[j] -= h;
    hi[j] += h;
    const double fd = (log_prior(5, hi) - log_prior(5, lo)) / (2 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-9));
  }
}

TEST_CASE("coalescent simulation matches its law") {
  SUBCASE("n = 2 holding time is Exp(1)") {
    RngStream rng(42);
    std::vector<double> draws;
    draws.reserve(100000);
    for (int i = 0; i < 100000; ++i) draws.push_back(simulate_coalescent(2, rng).holding_times[0]);
    const double p =
        teststat::ks_pvalue(std::move(draws), [](double x) { return 1.0 - std::exp(-x); });
    CHECK(p > 1e-3);
  }
  SUBCASE("n = 3 first merger pair is uniform") {
    RngStream rng(43);
    std::map<std::pair<NodeId, NodeId>, long> counts;
    for (int i = 0; i < 30000; ++i) {
      const auto tree = simulate_coalescent(3, rng);
      const auto& m = tree.topology.merger(0);
      ++counts[{m.first, m.second}];
    }
    REQUIRE(counts.size() == 3);
    std::vector<long> c;
    for (const auto& [k, v] : counts) c.push_back(v);
    CHECK(teststat::chi2_uniform_pvalue(c) > 1e-3);
  }
  SUBCASE("n = 5 mean height telescopes to 2(1 - 1/5)") {
    RngStream rng(44);
    double acc = 0.0;
    const int reps = 200000;
    for (int i = 0; i < reps; ++i) {
      const auto tree = simulate_coalescent(5, rng);
      for (double t : tree.holding_times) acc += t;
    }
    CHECK(acc / reps == doctest::Approx(2.0 * (1.0 - 0.2)).epsilon(0.01));
  }
}

TEST_CASE("positive-length edge sets agree across a type 2/3 face") {
  // At t_k = 0 the degenerate tree is shared by the orthants the operators
  // connect: the edges of positive length must coincide as leaf-set pairs.
  RngStream rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 4 + rng.uniform_int(3);
    auto tree = simulate_coalescent(n, rng);
    const int k = 1 + rng.uniform_int(n - 2);
    tree.holding_times[k] = 0.0;
    const auto times = node_times(tree.holding_times);

    // Edge identity at the degenerate point is geometric: the child clade
    // and the time span. Parent labels differ across the orthants because
    // the intermediate node collapses into the multiple merger.
    const auto positive_edges = [&](const RankedTopology& E) {
      const auto sets = E.leaf_sets();
      const auto table = EdgeTable::build(E);
      std::set<std::tuple<std::vector<int>, double, double>> out;
      for (const auto& e : table.edges) {
        if (edge_length(e, times) > 0.0) {
          const double lo = e.child_rank < 0 ? 0.0 : times[e.child_rank];
          out.insert({sets[e.child], lo, times[e.parent_rank]});
        }
      }
      return out;
    };

    if (tree.topology.nested_at(k)) {
      CHECK(positive_edges(tree.topology) == positive_edges(pivot_up(tree.topology, k)));
      CHECK(positive_edges(tree.topology) == positive_edges(pivot_down(tree.topology, k)));
    } else if (k <= n - 3) {
      CHECK(positive_edges(tree.topology) ==
            positive_edges(swap_mergers(tree.topology, k)));
    }
  }
}

TEST_CASE("newick export") {
  const auto E = RankedTopology::caterpillar(3);
  const std::vector<double> t{0.5, 0.25};
  CHECK(newick(E, t) == "((1:0.5,2:0.5):0.25,3:0.75);");
  CHECK(topology_log_line(E).find("mergers (0,1) (3,2)") != std::string::npos);
}

TEST_CASE("stable hash distinguishes topologies") {
  std::set<std::uint64_t> hashes;
  for (const auto& E : enumerate_ranked_topologies(5)) hashes.insert(E.id_hash());
  CHECK(hashes.size() == enumerate_ranked_topologies(5).size());
}
