#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace duallab {

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson limited
// tangents). Monotone data stays monotone after interpolation, which keeps
// finite-difference monotonicity checks on interpolated utilities meaningful.
class MonotoneCubic {
  public:
    MonotoneCubic(std::vector<double> xs, std::vector<double> ys)
        : x_(std::move(xs)), y_(std::move(ys)) {
        if (x_.size() != y_.size() || x_.size() < 3)
            throw std::invalid_argument("MonotoneCubic: need at least 3 matching points");
        for (std::size_t i = 1; i < x_.size(); ++i)
            if (!(x_[i] > x_[i - 1]))
                throw std::invalid_argument("MonotoneCubic: abscissae must be strictly increasing");
        const std::size_t n = x_.size();
        std::vector<double> d(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        m_.assign(n, 0.0);
        m_[0] = d[0];
        m_[n - 1] = d[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i)
            m_[i] = (d[i - 1] * d[i] <= 0.0) ? 0.0 : 0.5 * (d[i - 1] + d[i]);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (d[i] == 0.0) {
                m_[i] = m_[i + 1] = 0.0;
                continue;
            }
            const double a = m_[i] / d[i];
            const double b = m_[i + 1] / d[i];
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double tau = 3.0 / std::sqrt(s);
                m_[i] = tau * a * d[i];
                m_[i + 1] = tau * b * d[i];
            }
        }
    }

    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }

    double value(double x) const {
        const auto [k, t, h] = locate(x);
        const double t2 = t * t, t3 = t2 * t;
        return y_[k] * (2 * t3 - 3 * t2 + 1) + h * m_[k] * (t3 - 2 * t2 + t) +
               y_[k + 1] * (-2 * t3 + 3 * t2) + h * m_[k + 1] * (t3 - t2);
    }

    double derivative(double x) const {
        const auto [k, t, h] = locate(x);
        const double t2 = t * t;
        const double dydt = y_[k] * (6 * t2 - 6 * t) + h * m_[k] * (3 * t2 - 4 * t + 1) +
                            y_[k + 1] * (6 * t - 6 * t2) + h * m_[k + 1] * (3 * t2 - 2 * t);
        return dydt / h;
    }

    double second_derivative(double x) const {
        const auto [k, t, h] = locate(x);
        const double d2 = y_[k] * (12 * t - 6) + h * m_[k] * (6 * t - 4) +
                          y_[k + 1] * (6 - 12 * t) + h * m_[k + 1] * (6 * t - 2);
        return d2 / (h * h);
    }

  private:
    struct Loc {
        std::size_t k;
        double t;
        double h;
    };

    Loc locate(double x) const {
        if (!(x >= x_.front() && x <= x_.back()))
            throw std::domain_error("MonotoneCubic: argument outside tabulated domain");
        std::size_t lo = 0, hi = x_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= x ? lo : hi) = mid;
        }
        const double h = x_[lo + 1] - x_[lo];
        return {lo, (x - x_[lo]) / h, h};
    }

    std::vector<double> x_, y_, m_;
};

// Piecewise-linear lookup with flat extrapolation, for deterministic
// tabulated coefficients (volatility curves, integrands).
class PiecewiseLinear {
  public:
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
        : x_(std::move(xs)), y_(std::move(ys)) {
        if (x_.size() != y_.size() || x_.empty())
            throw std::invalid_argument("PiecewiseLinear: need matching non-empty tables");
        for (std::size_t i = 1; i < x_.size(); ++i)
            if (!(x_[i] > x_[i - 1]))
                throw std::invalid_argument("PiecewiseLinear: abscissae must be strictly increasing");
    }

    double value(double x) const {
        if (x <= x_.front()) return y_.front();
        if (x >= x_.back()) return y_.back();
        std::size_t lo = 0, hi = x_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= x ? lo : hi) = mid;
        }
        const double w = (x - x_[lo]) / (x_[lo + 1] - x_[lo]);
        return (1.0 - w) * y_[lo] + w * y_[lo + 1];
    }

  private:
    std::vector<double> x_, y_;
};

} // namespace duallab
