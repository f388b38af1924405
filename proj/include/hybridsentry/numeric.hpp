#pragma once

#include <span>
#include <vector>

namespace hybridsentry::numeric {

/// Linear-interpolation percentile at rank position p*(n-1) over an
/// ascending-sorted sample. p in [0, 1].
double percentile_sorted(std::span<const double> sorted, double p);

/// Same as percentile_sorted but sorts a copy first.
double percentile(std::span<const double> values, double p);

double mean(std::span<const double> values);

/// Population (n-divisor) variance about the arithmetic mean.
double population_variance(std::span<const double> values);
double population_std(std::span<const double> values);

/// Sign-preserving guard: keeps |d| >= eps, with sign(0) taken as +.
double guard_denominator(double d, double eps);

}  // namespace hybridsentry::numeric
