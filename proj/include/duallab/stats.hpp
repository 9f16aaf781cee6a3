#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "duallab/errors.hpp"

namespace duallab::stats {

// Compensated (Kahan) summation. Accumulation order is fixed by the caller's
// index order, so reductions are bit-reproducible regardless of how the data
// was produced.
class KahanSum {
  public:
    void add(double x) {
        const double y = x - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw statistics_error("mean of empty sample");
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value() / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs, double m) {
    if (xs.size() < 2) throw statistics_error("sample variance needs at least two points");
    KahanSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(xs.size() - 1);
}

inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard normal CDF: Acklam's rational approximation polished with
// one Halley step against erfc, good to ~1e-14 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw statistics_error("normal_quantile needs p in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = phi_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
};

// Two-sided normal-approximation confidence interval from the sample standard
// deviation. `level` is the total coverage, e.g. 0.99.
inline MeanCi mean_ci(std::span<const double> xs, double level = 0.99) {
    if (xs.size() < 2) throw statistics_error("confidence interval needs at least two points");
    if (!(level > 0.0 && level < 1.0)) throw statistics_error("CI level must be in (0,1)");
    MeanCi out;
    out.n = xs.size();
    out.mean = mean(xs);
    const double sd = std::sqrt(sample_variance(xs, out.mean));
    const double z = normal_quantile(0.5 + level / 2.0);
    out.half_width = z * sd / std::sqrt(static_cast<double>(xs.size()));
    out.lo = out.mean - out.half_width;
    out.hi = out.mean + out.half_width;
    return out;
}

} // namespace duallab::stats
