#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "duallab/errors.hpp"
#include "duallab/interp.hpp"

namespace duallab {

enum class UtilityKind { Log, Power, Tabulated };

// A utility function on (0, inf) together with its marginal, the inverse of
// the marginal, and its convex conjugate V(y) = sup_x [U(x) - x y]. Closed
// forms for the log and power families; tabulated utilities are interpolated
// monotone-cubically and conjugated numerically.
//
// Tabulated utilities are defined only on [x_min, x_max] of their table:
// evaluation outside (in particular below the smallest tabulated point) is a
// domain error, never an extrapolation.
class Utility {
  public:
    static Utility make_log() { return Utility(UtilityKind::Log, 0.0); }

    static Utility make_power(double p) {
        if (!(p < 1.0) || p == 0.0)
            throw invalid_crra_error("power utility requires p < 1 and p != 0");
        return Utility(UtilityKind::Power, p);
    }

    static Utility make_tabulated(std::vector<double> xs, std::vector<double> us) {
        Utility u(UtilityKind::Tabulated, 0.0);
        for (double x : xs)
            if (!(x > 0.0)) throw std::domain_error("tabulated utility needs positive abscissae");
        for (std::size_t i = 1; i < us.size(); ++i)
            if (!(us[i] > us[i - 1]))
                throw std::invalid_argument("tabulated utility values must be strictly increasing");
        u.table_ = std::make_shared<MonotoneCubic>(std::move(xs), std::move(us));
        u.floor_ = u.table_->x_min();
        return u;
    }

    // Two columns (x, U(x)), ascending in x; '#' starts a comment line.
    static Utility from_table(std::istream& in) {
        std::vector<double> xs, us;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream row(line);
            double x, u;
            if (row >> x >> u) {
                xs.push_back(x);
                us.push_back(u);
            }
        }
        if (xs.size() < 3) throw config_error("utility table needs at least 3 rows");
        return make_tabulated(std::move(xs), std::move(us));
    }

    static Utility from_table_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open utility table: " + path);
        return from_table(in);
    }

    UtilityKind kind() const { return kind_; }
    bool is_log() const { return kind_ == UtilityKind::Log; }

    // Power exponent; 0 encodes the log case so CRRA formulas can share code.
    double p() const { return p_; }
    // Conjugate exponent, 1 - q = 1/(1 - p).
    double q() const { return q_; }
    double domain_floor() const { return floor_; }

    double value(double x) const {
        require_positive(x, "utility argument");
        switch (kind_) {
        case UtilityKind::Log:
            return std::log(x);
        case UtilityKind::Power:
            return std::pow(x, p_) / p_;
        case UtilityKind::Tabulated:
            return table_->value(checked(x));
        }
        return 0.0;
    }

    double marginal(double x) const {
        require_positive(x, "marginal utility argument");
        switch (kind_) {
        case UtilityKind::Log:
            return 1.0 / x;
        case UtilityKind::Power:
            return std::pow(x, p_ - 1.0);
        case UtilityKind::Tabulated:
            return table_->derivative(checked(x));
        }
        return 0.0;
    }

    // U''(x), used by Newton-type solvers.
    double marginal_derivative(double x) const {
        require_positive(x, "marginal derivative argument");
        switch (kind_) {
        case UtilityKind::Log:
            return -1.0 / (x * x);
        case UtilityKind::Power:
            return (p_ - 1.0) * std::pow(x, p_ - 2.0);
        case UtilityKind::Tabulated:
            return table_->second_derivative(checked(x));
        }
        return 0.0;
    }

    double inverse_marginal(double y) const {
        require_positive(y, "inverse marginal argument");
        switch (kind_) {
        case UtilityKind::Log:
            return 1.0 / y;
        case UtilityKind::Power:
            return std::pow(y, 1.0 / (p_ - 1.0));
        case UtilityKind::Tabulated:
            return invert_marginal_numeric(y);
        }
        return 0.0;
    }

    double conjugate(double y) const {
        require_positive(y, "conjugate argument");
        switch (kind_) {
        case UtilityKind::Log:
            return -std::log(y) - 1.0;
        case UtilityKind::Power:
            return -std::pow(y, q_) / q_;
        case UtilityKind::Tabulated:
            return conjugate_numeric(y);
        }
        return 0.0;
    }

    // V'(y) = -I(y).
    double conjugate_derivative(double y) const { return -inverse_marginal(y); }

    // V(y) - U(x) + x y, nonnegative with equality exactly when y = U'(x).
    double fenchel_gap(double x, double y) const { return conjugate(y) - value(x) + x * y; }

  private:
    Utility(UtilityKind kind, double p) : kind_(kind), p_(p) {
        q_ = (kind_ == UtilityKind::Power) ? p / (p - 1.0) : 0.0;
    }

    static void require_positive(double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error(std::string(what) + " must be positive and finite");
    }

    double checked(double x) const {
        if (x < table_->x_min() || x > table_->x_max())
            throw std::domain_error("argument outside tabulated utility domain");
        return x;
    }

    double invert_marginal_numeric(double y) const {
        double lo = table_->x_min(), hi = table_->x_max();
        const double m_lo = table_->derivative(lo), m_hi = table_->derivative(hi);
        if (y > m_lo || y < m_hi)
            throw std::domain_error("marginal level outside tabulated range");
        for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (table_->derivative(mid) >= y ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    // Bracketed golden-section search on log-x. The marginal is decreasing,
    // so the first-order condition U'(x) = y has at most one sign change and
    // the bracket around it contains the unique interior maximizer.
    double conjugate_numeric(double y) const {
        const double x_lo = table_->x_min(), x_hi = table_->x_max();
        if (y >= table_->derivative(x_lo))
            throw std::domain_error("conjugate maximizer below tabulated domain");
        if (y <= table_->derivative(x_hi))
            throw unbounded_conjugate_error(
                "conjugate supremum beyond tabulated domain; table too short");
        double a = std::log(x_lo), b = std::log(x_hi);
        const auto f = [&](double s) {
            const double x = std::exp(s);
            return table_->value(x) - x * y;
        };
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = f(c), fd = f(d);
        while (b - a > 1e-13) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = f(d);
            }
        }
        return f(0.5 * (a + b));
    }

    UtilityKind kind_;
    double p_ = 0.0;
    double q_ = 0.0;
    double floor_ = 0.0;
    std::shared_ptr<const MonotoneCubic> table_;
};

struct ElasticityEstimate {
    double value = 0.0;
    bool satisfied = false;
    // Set when U <= 0 on the whole tail, where the elasticity ratio is
    // meaningless and slow (log-like) growth is reported as 0.
    bool tail_nonpositive = false;
};

// Estimates limsup_{x->inf} x U'(x) / U(x) from the largest grid points.
// Values below 1 indicate a well-posed problem.
inline ElasticityEstimate asymptotic_elasticity(const Utility& u, std::span<const double> x_grid) {
    if (x_grid.size() < 3) throw std::invalid_argument("elasticity grid needs at least 3 points");
    for (std::size_t i = 1; i < x_grid.size(); ++i)
        if (!(x_grid[i] > x_grid[i - 1]))
            throw std::invalid_argument("elasticity grid must be ascending");
    const double x_max = x_grid.back();
    if (!(x_max >= 1e3)) throw std::invalid_argument("elasticity grid must reach at least 1e3");

    ElasticityEstimate out;
    bool any = false;
    for (double x : x_grid) {
        if (x < x_max / 10.0) continue;
        const double ux = u.value(x);
        if (ux <= 0.0) continue;
        any = true;
        out.value = std::max(out.value, x * u.marginal(x) / ux);
    }
    if (!any) {
        out.value = 0.0;
        out.tail_nonpositive = true;
    }
    out.satisfied = out.value < 1.0;
    return out;
}

struct InadaReport {
    double eps = 0.0;
    double big = 0.0;
    double marginal_at_eps = 0.0;
    double marginal_at_big = 0.0;
    bool zero_end_ok = false;
    bool infinity_end_ok = false;
    bool passed = false;
};

// Empirical check that U' blows up at 0 and vanishes at infinity, probed at
// configurable endpoints with configurable thresholds. The defaults accept
// every CRRA utility at the default endpoints while rejecting linear growth.
inline InadaReport check_inada(const Utility& u, double eps = 1e-4, double big = 1e6,
                               double min_growth = 10.0, double max_decay = 1e-2) {
    if (!(eps > 0.0 && eps < 1.0 && big > 1.0))
        throw std::invalid_argument("check_inada requires 0 < eps < 1 < big");
    InadaReport r;
    r.eps = eps;
    r.big = big;
    r.marginal_at_eps = u.marginal(eps);
    r.marginal_at_big = u.marginal(big);
    r.zero_end_ok = r.marginal_at_eps > min_growth;
    r.infinity_end_ok = r.marginal_at_big < max_decay;
    r.passed = r.zero_end_ok && r.infinity_end_ok;
    return r;
}

} // namespace duallab
