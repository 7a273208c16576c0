#include "zigzag/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace zigzag {

double tree_height(const HybridState& state) {
  const int mergers = state.topo().merger_count();
  double h = 0.0;
  for (int k = 0; k < mergers; ++k) h += state.coords[k];
  return h;
}

namespace {

double sample_variance(std::span<const double> xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / (xs.size() - 1);
}

// Variance of means over consecutive batches of size b.
double batch_variance(std::span<const double> xs, std::size_t b, double mean) {
  const std::size_t nb = xs.size() / b;
  double acc = 0.0;
  for (std::size_t j = 0; j < nb; ++j) {
    double m = 0.0;
    for (std::size_t i = j * b; i < (j + 1) * b; ++i) m += xs[i];
    m /= b;
    acc += (m - mean) * (m - mean);
  }
  return acc / (nb - 1);
}

}  // namespace

EssResult batch_means_ess(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 100) throw std::invalid_argument("batch-means ESS needs at least 100 samples");
  EssResult out;
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;
  out.mean = mean;
  const double var = sample_variance(samples, mean);
  if (var == 0.0) {
    out.degenerate = true;
    out.ess = static_cast<double>(n);
    return out;
  }
  const std::size_t b1 = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const double bv1 = batch_variance(samples, b1, mean);
  out.se_mean = std::sqrt(bv1 / (n / b1));
  out.ess = std::min(static_cast<double>(n), n * var / (b1 * bv1));

  // Stability heuristic: the integrated-autocorrelation estimate b*var_b/var
  // should not move by more than a factor 3 between sqrt(N) and N^(2/3)
  // batches.
  const std::size_t b2 =
      std::max<std::size_t>(b1 + 1, static_cast<std::size_t>(std::pow(n, 2.0 / 3.0)));
  if (n / b2 >= 2) {
    const double tau1 = b1 * bv1 / var;
    const double tau2 = b2 * batch_variance(samples, b2, mean) / var;
    const double ratio = tau2 > tau1 ? tau2 / tau1 : tau1 / tau2;
    out.unstable = ratio > 3.0;
  }
  return out;
}

ComparisonReport compare_report(const std::vector<MethodInput>& inputs,
                                bool has_theta, int n_samples) {
  ComparisonReport report;
  for (const auto& input : inputs) {
    MethodReport row;
    row.method = input.method;
    row.wall_seconds = input.wall_seconds;
    for (const auto& e : input.trace->events)
      ++row.event_counts[to_string(e.kind)];

    const auto states = discretize(*input.trace, n_samples);
    const auto summarize = [&](const std::string& name, auto&& f) {
      std::vector<double> samples;
      samples.reserve(states.size());
      for (const auto& s : states) samples.push_back(f(s));
      const EssResult ess = batch_means_ess(samples);
      FunctionalSummary summary;
      summary.name = name;
      summary.mean = ess.mean;
      summary.se = ess.se_mean;
      summary.ess = ess.ess;
      summary.ess_per_sec = input.wall_seconds > 0.0 ? ess.ess / input.wall_seconds : 0.0;
      summary.flagged = ess.degenerate || ess.unstable;
      row.functionals.push_back(std::move(summary));
    };
    if (has_theta)
      summarize("theta", [](const HybridState& s) { return s.coords.back(); });
    summarize("height", tree_height);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string ComparisonReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-8s %12s %12s %10s %12s %8s\n", "method",
                "stat", "mean", "se", "ess", "ess/sec", "flag");
  os << buf;
  for (const auto& row : rows) {
    for (const auto& f : row.functionals) {
      std::snprintf(buf, sizeof buf, "%-10s %-8s %12.6g %12.4g %10.4g %12.4g %8s\n",
                    row.method.c_str(), f.name.c_str(), f.mean, f.se, f.ess,
                    f.ess_per_sec, f.flagged ? "*" : "");
      os << buf;
    }
  }
  return os.str();
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream os;
  os << "method,stat,mean,se,ess,ess_per_sec,flagged,wall_seconds,events\n";
  for (const auto& row : rows) {
    std::size_t events = 0;
    for (const auto& [kind, count] : row.event_counts)
      if (kind != std::string("end")) events += count;
    for (const auto& f : row.functionals) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s,%s,%.12g,%.6g,%.6g,%.6g,%d,%.4g,%zu\n",
                    row.method.c_str(), f.name.c_str(), f.mean, f.se, f.ess,
                    f.ess_per_sec, f.flagged ? 1 : 0, row.wall_seconds, events);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace zigzag
