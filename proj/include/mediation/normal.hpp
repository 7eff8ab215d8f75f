#ifndef MEDIATION_NORMAL_HPP
#define MEDIATION_NORMAL_HPP

#include <cmath>
#include <limits>
#include <numbers>

#include "mediation/errors.hpp"

namespace mediation::normal {

inline double pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - cdf(x) without cancellation.
inline double sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF. Acklam's rational approximation
/// (relative error < 1.2e-9) followed by one Halley step, which brings the
/// result to near machine precision.
inline double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ArgumentError("normal", "quantile: probability outside [0,1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement; work in the smaller tail to avoid cancellation.
  const double e = (p < 0.5) ? cdf(x) - p : (1.0 - p) - sf(x);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

/// Two-sided critical value z_{1 - (1-level)/2}.
inline double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ArgumentError("normal", "confidence level must lie in (0,1)");
  return quantile(0.5 + 0.5 * level);
}

/// Normal(mu, sigma^2) truncated to [lo, hi].
struct Truncated {
  double lo;
  double hi;
  double mu;
  double sigma = 1.0;

  double alpha() const { return (lo - mu) / sigma; }
  double beta() const { return (hi - mu) / sigma; }

  /// Probability mass of the untruncated normal inside [lo, hi].
  double mass() const {
    const double a = alpha(), b = beta();
    return (a > 0.0) ? sf(a) - sf(b) : cdf(b) - cdf(a);
  }

  double mean() const {
    return mu + sigma * (pdf(alpha()) - pdf(beta())) / mass();
  }

  double cdf_at(double x) const {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double a = alpha(), t = (x - mu) / sigma;
    return (a > 0.0) ? (sf(a) - sf(t)) / mass() : (cdf(t) - cdf(a)) / mass();
  }

  /// Inverse-CDF draw from a uniform u in (0,1).
  double inverse(double u) const {
    const double a = alpha(), b = beta();
    double t;
    if (a > 0.0) {
      // Both bounds in the upper tail: invert survival functions instead.
      const double sa = sf(a), sb = sf(b);
      t = -quantile(sa - u * (sa - sb));
    } else {
      const double ca = cdf(a), cb = cdf(b);
      t = quantile(ca + u * (cb - ca));
    }
    const double x = mu + sigma * t;
    return std::fmin(std::fmax(x, lo), hi);
  }
};

} // namespace mediation::normal

#endif // MEDIATION_NORMAL_HPP
