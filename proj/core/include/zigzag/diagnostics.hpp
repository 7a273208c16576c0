#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "zigzag/engine.hpp"

namespace zigzag {

// Sum of the holding times t_1 + ... + t_{n-1}.
double tree_height(const HybridState& state);

struct EssResult {
  double mean = 0.0;
  double se_mean = 0.0;   // batch-means standard error of the mean
  double ess = 0.0;
  bool degenerate = false;  // zero-variance input; ess reported as N
  bool unstable = false;    // batch-variance estimate disagrees across batch
                            // sizes by more than a factor 3
};

// Batch-means effective sample size of equally spaced samples:
// ESS = N * var(samples) / (batch_size * var(batch means)), batch size
// floor(sqrt(N)). Needs at least 100 samples.
EssResult batch_means_ess(std::span<const double> samples);

struct FunctionalSummary {
  std::string name;
  double mean = 0.0;
  double se = 0.0;
  double ess = 0.0;
  double ess_per_sec = 0.0;
  bool flagged = false;  // degenerate or unstable ESS estimate
};

struct MethodReport {
  std::string method;
  double wall_seconds = 0.0;
  std::map<std::string, std::size_t> event_counts;
  std::vector<FunctionalSummary> functionals;
};

struct ComparisonReport {
  std::vector<MethodReport> rows;

  std::string to_text() const;
  std::string to_csv() const;
};

struct MethodInput {
  std::string method;
  const EventTrace* trace = nullptr;
  double wall_seconds = 0.0;
};

// Summaries of theta (when present) and the tree height for each method,
// from n_samples equally spaced path samples. Pure function of its inputs.
ComparisonReport compare_report(const std::vector<MethodInput>& inputs,
                                bool has_theta, int n_samples = 10000);

}  // namespace zigzag
