#include "hybridsentry/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hybridsentry::numeric {

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || lo == hi) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, p);
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double mu = mean(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - mu) * (v - mu);
  return ss / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  return std::sqrt(population_variance(values));
}

double guard_denominator(double d, double eps) {
  if (d >= 0.0) return std::max(d, eps);
  return std::min(d, -eps);
}

}  // namespace hybridsentry::numeric
