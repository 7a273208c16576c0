#pragma once

#include <memory>
#include <vector>

#include "zigzag/errors.hpp"
#include "zigzag/target_base.hpp"

namespace zigzag {

// Infinite-sites observations: each leaf carries a finite set of mutation
// coordinates in (0, 1). Mutations are identified by coordinate; the set of
// leaves carrying a mutation pins the edge it sits on, so carrier sets must
// be pairwise nested or disjoint (perfect phylogeny) and never the full leaf
// set.
class IsmDataset {
 public:
  IsmDataset(int leaf_count, std::vector<std::vector<double>> leaf_mutations);

  int leaf_count() const { return leaf_count_; }
  int total_mutations() const { return static_cast<int>(mutations_.size()); }
  const std::vector<std::vector<double>>& leaf_mutations() const { return leaf_mutations_; }

  struct Mutation {
    double coord = 0.0;
    std::vector<int> carriers;  // sorted leaf labels
  };
  const std::vector<Mutation>& mutations() const { return mutations_; }

  // Number of distinct leaf types (distinct mutation sets).
  int distinct_types() const;

 private:
  int leaf_count_;
  std::vector<std::vector<double>> leaf_mutations_;  // sorted per leaf
  std::vector<Mutation> mutations_;
};

struct DatasetSummary {
  int leaf_count = 0;
  int distinct_types = 0;
  int mutation_count = 0;
};

DatasetSummary summarize(const IsmDataset& data);

// Each mutation sits on the unique edge whose child subtends exactly its
// carrier set; a topology without such an edge has zero posterior density.
struct MutationAssignment {
  bool consistent = false;
  std::vector<int> edge_counts;  // per child node id, size 2n-2
  int first_merger_count = 0;    // mutations on the child edges of merger 0
  int total = 0;
};

MutationAssignment assign_mutations(const RankedTopology& E, const IsmDataset& data);

// Infinite-sites posterior over (topology, holding times, theta).
class IsmTarget final : public CoalescentTargetBase {
 public:
  explicit IsmTarget(std::shared_ptr<const IsmDataset> data,
                     std::shared_ptr<const ThetaPrior> prior = flat_prior());

  double log_density(const HybridState& state) const override;
  double flip_rate(const HybridState& state, int i) const override;
  double flip_bound(const HybridState& state, int i, double window) const override;
  bool mode_consistent(const RankedTopology& E) const override;

  const IsmDataset& dataset() const { return *data_; }
  const ThetaPrior& prior() const { return *prior_; }

 protected:
  bool boundary_guarded(const HybridState& state, int coord) const override;
  void validate_jump(const HybridState& state, int coord,
                     const RankedTopology& landing) const override;

 private:
  struct TopoCache {
    std::shared_ptr<const RankedTopology> key;
    EdgeTable edges;
    MutationAssignment assignment;
    std::vector<int> mutated;  // child node ids of edges with mutations
  };
  const TopoCache& cache_for(const HybridState& state) const;

  std::shared_ptr<const IsmDataset> data_;
  std::shared_ptr<const ThetaPrior> prior_;
  mutable TopoCache cache_;
};

// Draws a dataset from the generative model on a fixed tree: each edge
// receives Poisson(theta * length / 2) mutations at U(0,1) coordinates,
// inherited by all leaves below.
IsmDataset simulate_ism_data(const RankedTopology& E,
                             std::span<const double> holding_times, double theta,
                             RngStream& rng);

// Initial tree consistent with the data: coalescent draws conditioned by
// rejection, falling back to the perfect-phylogeny tree implied by carrier
// nesting with prior-mean holding times once the try budget is exhausted.
CoalescentTree initial_ism_tree(const IsmDataset& data, RngStream& rng,
                                int max_tries = 1000);

}  // namespace zigzag
