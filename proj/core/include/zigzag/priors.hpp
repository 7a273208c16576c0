#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <utility>

namespace zigzag {

// Prior for the scalar mutation rate, supplied as log-density and derivative.
// dlog_range feeds the constant thinning bounds, which need the extremes of
// the derivative over the theta values reachable inside a localization
// window.
class ThetaPrior {
 public:
  virtual ~ThetaPrior() = default;

  virtual double log_density(double theta) const = 0;
  virtual double dlog(double theta) const = 0;

  // {min, max} of dlog over [lo, hi], 0 < lo <= hi.
  virtual std::pair<double, double> dlog_range(double lo, double hi) const = 0;

  // True when the density vanishes at theta = 0, so the boundary must be
  // localization-guarded even without mutations.
  virtual bool vanishes_at_zero() const = 0;
};

// pi_0(theta) proportional to 1 on (0, inf).
class FlatImproperPrior final : public ThetaPrior {
 public:
  double log_density(double) const override { return 0.0; }
  double dlog(double) const override { return 0.0; }
  std::pair<double, double> dlog_range(double, double) const override { return {0.0, 0.0}; }
  bool vanishes_at_zero() const override { return false; }
};

// Gamma(shape, rate), unnormalized. The derivative (shape-1)/theta - rate is
// monotone in theta, so window extremes sit at the endpoints.
class GammaPrior final : public ThetaPrior {
 public:
  GammaPrior(double shape, double rate) : shape_(shape), rate_(rate) {}

  double log_density(double theta) const override {
    if (theta <= 0.0) return -std::numeric_limits<double>::infinity();
    return (shape_ - 1.0) * std::log(theta) - rate_ * theta;
  }
  double dlog(double theta) const override { return (shape_ - 1.0) / theta - rate_; }
  std::pair<double, double> dlog_range(double lo, double hi) const override {
    const double a = dlog(lo);
    const double b = dlog(hi);
    return {std::min(a, b), std::max(a, b)};
  }
  bool vanishes_at_zero() const override { return shape_ > 1.0; }

  double shape() const { return shape_; }
  double rate() const { return rate_; }

 private:
  double shape_;
  double rate_;
};

inline std::shared_ptr<const ThetaPrior> flat_prior() {
  static const auto prior = std::make_shared<const FlatImproperPrior>();
  return prior;
}

}  // namespace zigzag
