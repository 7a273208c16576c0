#include "support/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace teststat {

double mean(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / xs.size();
}

double variance(std::span<const double> xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / (xs.size() - 1);
}

namespace {

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < 1000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  // Lentz continued fraction.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_pvalue(double stat, int dof) { return gamma_q(dof / 2.0, stat / 2.0); }

double chi2_uniform_pvalue(std::span<const long> counts) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = static_cast<double>(total) / counts.size();
  double stat = 0.0;
  for (long c : counts) stat += (c - expected) * (c - expected) / expected;
  return chi2_pvalue(stat, static_cast<int>(counts.size()) - 1);
}

double ks_pvalue(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace teststat
