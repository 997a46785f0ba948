#include "rehab/statistics.hpp"

#include "rehab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rehab::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("p", "normal quantile needs 0 < p < 1");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

namespace {

double poly(std::initializer_list<double> c, double x) {
  double result = 0.0;
  double power = 1.0;
  for (double coef : c) {
    result += coef * power;
    power *= x;
  }
  return result;
}

// Coefficients a_1..a_{n/2} (positive, largest first) for the W statistic.
std::vector<double> sw_coefficients(std::size_t n) {
  const std::size_t half = n / 2;
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
    return a;
  }
  const double an = static_cast<double>(n);
  std::vector<double> m(half);
  double summ2 = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
    summ2 += m[i] * m[i];
  }
  summ2 *= 2.0;
  const double ssumm2 = std::sqrt(summ2);
  const double rsn = 1.0 / std::sqrt(an);
  const double a1 = poly({0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056}, rsn) - m[0] / ssumm2;
  std::size_t first_scaled;
  double fac;
  if (n > 5) {
    const double a2 = -m[1] / ssumm2 + poly({0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633}, rsn);
    fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
    a[1] = a2;
    first_scaled = 2;
  } else {
    fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    first_scaled = 1;
  }
  a[0] = a1;
  for (std::size_t i = first_scaled; i < half; ++i) a[i] = -m[i] / fac;
  return a;
}

}  // namespace

ShapiroWilkResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) {
    throw ValidationError("sample", "Shapiro-Wilk needs 3 to 5000 values, got " + std::to_string(n));
  }
  for (double v : sample) {
    if (!std::isfinite(v)) throw ValidationError("sample", "non-finite value");
  }
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  ShapiroWilkResult result;
  result.n = n;
  const double range = x.back() - x.front();
  if (range <= 1e-19 * std::max(1.0, std::abs(x.front()))) {
    result.degenerate = true;
    return result;
  }
  const auto a = sw_coefficients(n);
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += a[i] * (x[n - 1 - i] - x[i]) / range;
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ssq = 0.0;
  for (double v : x) ssq += ((v - mu) / range) * ((v - mu) / range);
  double w = std::min(1.0, num * num / ssq);
  result.w = w;

  const double an = static_cast<double>(n);
  if (n == 3) {
    constexpr double pi6 = 6.0 / 3.14159265358979323846;
    constexpr double stqr = 3.14159265358979323846 / 3.0;
    w = std::max(w, 0.75);
    result.w = w;
    result.p_value = std::max(0.0, pi6 * (std::asin(std::sqrt(w)) - stqr));
    return result;
  }
  const double w1 = std::log(1.0 - w);
  double y = w1;
  double m;
  double s;
  if (n <= 11) {
    const double gamma = poly({-2.273, 0.459}, an);
    if (y >= gamma) {
      result.p_value = 1e-99;
      return result;
    }
    y = -std::log(gamma - y);
    m = poly({0.5440, -0.39978, 0.025054, -6.714e-4}, an);
    s = std::exp(poly({1.3822, -0.77857, 0.062767, -0.0020322}, an));
  } else {
    const double xx = std::log(an);
    m = poly({-1.5861, -0.31082, -0.083751, 0.0038915}, xx);
    s = std::exp(poly({-0.4803, -0.082676, 0.0030302}, xx));
  }
  result.p_value = 1.0 - normal_cdf((y - m) / s);
  return result;
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, bool two_sided) {
  if (a.empty() || b.empty()) throw ValidationError("sample", "Mann-Whitney U needs two non-empty samples");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t total = na + nb;
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  for (double v : all) {
    if (!std::isfinite(v)) throw ValidationError("sample", "non-finite value");
  }
  const auto ranks = midranks(all);
  const double ra = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  const double offset = static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;

  MannWhitneyResult result;
  result.u = ra - offset;
  const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;

  if (total <= kExactMannWhitneyLimit) {
    // Distribution of the first sample's rank sum over all C(total, na)
    // assignments. Doubled midranks are integers, so sums index an array.
    std::vector<int> doubled(total);
    for (std::size_t i = 0; i < total; ++i) doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    const int max_sum = std::accumulate(doubled.begin(), doubled.end(), 0);
    std::vector<std::vector<double>> count(na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    count[0][0] = 1.0;
    for (int r : doubled) {
      for (std::size_t k = na; k >= 1; --k) {
        for (int s = max_sum; s >= r; --s) count[k][static_cast<std::size_t>(s)] += count[k - 1][static_cast<std::size_t>(s - r)];
      }
    }
    const double u_obs2 = 2.0 * result.u;
    const double mu2 = 2.0 * mu;
    double hits = 0.0;
    double all_count = 0.0;
    for (int s = 0; s <= max_sum; ++s) {
      const double c = count[na][static_cast<std::size_t>(s)];
      if (c == 0.0) continue;
      all_count += c;
      const double u2 = static_cast<double>(s) - 2.0 * offset;
      const bool extreme = two_sided ? std::abs(u2 - mu2) >= std::abs(u_obs2 - mu2) - 1e-9 : u2 >= u_obs2 - 1e-9;
      if (extreme) hits += c;
    }
    result.p_value = std::min(1.0, hits / all_count);
    result.exact = true;
    return result;
  }

  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double n = static_cast<double>(total);
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) {
    result.p_value = 1.0;
    return result;
  }
  const double sd = std::sqrt(var);
  if (two_sided) {
    const double z = (std::abs(result.u - mu) - 0.5) / sd;
    result.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
  } else {
    const double z = (result.u - mu - 0.5) / sd;
    result.p_value = 1.0 - normal_cdf(z);
  }
  return result;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("values", "mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) {
    if (values.empty()) throw ValidationError("values", "variance of an empty sample");
    return 0.0;
  }
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return ss / static_cast<double>(values.size() - 1);
}

}  // namespace rehab::stats
