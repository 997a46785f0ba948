#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rehab::stats {

/// Standard normal CDF.
double normal_cdf(double z);
/// Inverse standard normal CDF (Wichura AS241, ~1e-16 relative accuracy).
double normal_quantile(double p);

struct ShapiroWilkResult {
  double w = 1.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool degenerate = false;  // zero range: W and p are not meaningful

  /// Standard reading: a small p rejects normality.
  bool rejects_normality(double alpha = 0.05) const noexcept { return !degenerate && p_value < alpha; }
};

/// Shapiro-Wilk W with Royston's coefficient and p-value approximations.
/// ValidationError unless 3 <= n <= 5000.
ShapiroWilkResult shapiro_wilk(std::span<const double> sample);

struct MannWhitneyResult {
  double u = 0.0;  // U of the first sample
  double p_value = 1.0;
  bool exact = false;
};

/// Exact sample sizes: n_a + n_b at or below this use the permutation
/// distribution; larger ones the tie-corrected normal approximation.
inline constexpr std::size_t kExactMannWhitneyLimit = 12;

/// Two-sided p = P(|U - mean| >= |U_obs - mean|); one-sided tests whether the
/// first sample tends to be larger. ValidationError for an empty sample.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, bool two_sided = true);

/// Midranks (1-based) of `values`, ties sharing the mean rank.
std::vector<double> midranks(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample variance with n - 1 in the denominator; 0 for a single value.
double sample_variance(std::span<const double> values);

}  // namespace rehab::stats
