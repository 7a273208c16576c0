#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "zigzag/errors.hpp"
#include "zigzag/target_base.hpp"

namespace zigzag {

// Closed interval, the scalar type of the window-extremal likelihood passes
// behind the finite-sites thinning bounds.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double x) : lo(x), hi(x) {}  // NOLINT: intentional implicit widening
  Interval(double l, double h) : lo(l), hi(h) {}

  Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
  Interval& operator+=(const Interval& o) {
    lo += o.lo;
    hi += o.hi;
    return *this;
  }
  Interval operator*(const Interval& o) const {
    const double a = lo * o.lo, b = lo * o.hi, c = hi * o.lo, d = hi * o.hi;
    return {std::min(std::min(a, b), std::min(c, d)),
            std::max(std::max(a, b), std::max(c, d))};
  }
  Interval operator/(double m) const { return {lo / m, hi / m}; }
};

// num / den with den.lo > 0.
Interval interval_div(const Interval& num, const Interval& den);

// Leaf type matrix over a fixed site set.
class FsmDataset {
 public:
  FsmDataset(int leaf_count, int num_sites, std::string alphabet,
             std::vector<std::uint8_t> types /* site-major, size sites*n */);

  int leaf_count() const { return leaf_count_; }
  int num_sites() const { return num_sites_; }
  const std::string& alphabet() const { return alphabet_; }
  std::uint8_t type(int site, int leaf) const {
    return types_[static_cast<std::size_t>(site) * leaf_count_ + leaf];
  }

  bool site_constant(int site) const;
  int segregating_sites() const;
  // Number of sites at which two leaves differ.
  int diff_count(int leaf_a, int leaf_b) const;

 private:
  int leaf_count_;
  int num_sites_;
  std::string alphabet_;
  std::vector<std::uint8_t> types_;
};

// Per-site mutation channel: transition matrix over branch length and
// mutation rate, its derivatives, and entrywise ranges over a
// (length, theta) box for the thinning bounds. Plug-in point; only the
// symmetric two-type kernel ships.
class SiteKernel {
 public:
  virtual ~SiteKernel() = default;

  virtual int num_types() const = 0;
  virtual double stationary(int h) const = 0;
  virtual double transition(int h, int g, double length, double theta) const = 0;
  virtual double d_dlength(int h, int g, double length, double theta) const = 0;
  virtual double d_dtheta(int h, int g, double length, double theta) const = 0;

  virtual Interval transition_range(int h, int g, Interval length, Interval theta) const = 0;
  virtual Interval d_dlength_range(int h, int g, Interval length, Interval theta) const = 0;
  virtual Interval d_dtheta_range(int h, int g, Interval length, Interval theta) const = 0;

  // One jump of the embedded chain from type h (data simulation).
  virtual int mutate(int h, RngStream& rng) const = 0;
};

// Two types, every mutation flips: Q_hg(t) = 1/2 + (1{h=g} - 1/2) e^{-theta t},
// stationary (1/2, 1/2).
class BinarySymmetricKernel final : public SiteKernel {
 public:
  int num_types() const override { return 2; }
  double stationary(int) const override { return 0.5; }
  double transition(int h, int g, double length, double theta) const override;
  double d_dlength(int h, int g, double length, double theta) const override;
  double d_dtheta(int h, int g, double length, double theta) const override;
  Interval transition_range(int h, int g, Interval length, Interval theta) const override;
  Interval d_dlength_range(int h, int g, Interval length, Interval theta) const override;
  Interval d_dtheta_range(int h, int g, Interval length, Interval theta) const override;
  int mutate(int h, RngStream&) const override { return 1 - h; }
};

std::shared_ptr<const SiteKernel> binary_symmetric_kernel();

// Finite-sites posterior: coalescent prior times the pruning likelihood with
// the root type marginalized under the kernel's stationary distribution.
class FsmTarget final : public CoalescentTargetBase {
 public:
  FsmTarget(std::shared_ptr<const FsmDataset> data,
            std::shared_ptr<const SiteKernel> kernel = binary_symmetric_kernel(),
            std::shared_ptr<const ThetaPrior> prior = flat_prior());

  double log_density(const HybridState& state) const override;
  double flip_rate(const HybridState& state, int i) const override;
  double flip_bound(const HybridState& state, int i, double window) const override;

  // Pruning log-likelihood alone (no prior terms).
  double log_likelihood(const RankedTopology& E, std::span<const double> holding_times,
                        double theta) const;

  const FsmDataset& dataset() const { return *data_; }
  const SiteKernel& kernel() const { return *kernel_; }
  const ThetaPrior& prior() const { return *prior_; }

  // Inner-loop operation count of the likelihood passes; cost accounting.
  std::uint64_t pass_ops() const { return pass_ops_; }

 protected:
  bool boundary_guarded(const HybridState& state, int coord) const override;

 private:
  struct ExactPass {
    bool valid = false;
    std::shared_ptr<const RankedTopology> topo;
    std::vector<double> coords;
    double log_lik = 0.0;
    std::vector<double> dlog_dlength;  // per child node id
    double dlog_dtheta = 0.0;
  };
  struct BoundPass {
    bool valid = false;
    std::shared_ptr<const RankedTopology> topo;
    std::vector<double> coords;
    std::vector<double> vels;
    double window = -1.0;
    std::vector<Interval> dlog_dlength;
    Interval dlog_dtheta;
  };

  const ExactPass& exact_pass(const HybridState& state) const;
  const BoundPass& bound_pass(const HybridState& state, double window) const;

  std::shared_ptr<const FsmDataset> data_;
  std::shared_ptr<const SiteKernel> kernel_;
  std::shared_ptr<const ThetaPrior> prior_;
  mutable ExactPass exact_;
  mutable BoundPass bound_;
  mutable std::uint64_t pass_ops_ = 0;
};

// Generative model on a fixed tree: stationary root types, per-site
// mutations along each edge at rate theta / (2 |S|), types jumping through
// the kernel's embedded chain.
FsmDataset simulate_fsm_data(const RankedTopology& E,
                             std::span<const double> holding_times, double theta,
                             int num_sites, const SiteKernel& kernel, RngStream& rng);

}  // namespace zigzag
