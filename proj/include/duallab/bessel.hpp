#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "duallab/errors.hpp"
#include "duallab/interp.hpp"
#include "duallab/rng.hpp"
#include "duallab/stats.hpp"
#include "duallab/utility.hpp"

namespace duallab {

struct PsiSpec {
    enum class Kind { Zero, Constant, Tabulated };
    Kind kind = Kind::Zero;
    double value = 0.0;
    std::vector<double> times, values; // Tabulated

    double at(double t) const {
        switch (kind) {
        case Kind::Zero:
            return 0.0;
        case Kind::Constant:
            return value;
        case Kind::Tabulated:
            return PiecewiseLinear(times, values).value(t);
        }
        return 0.0;
    }
};

struct VolModel {
    enum class Kind { Constant, Tabulated };
    Kind kind = Kind::Constant;
    double value = 1.0;
    std::vector<double> times, values;
};

struct SdeConfig {
    double alpha = 0.1;   // impatience rate
    double x = 1.0;       // initial capital
    double p = 0.0;       // CRRA exponent, 0 for log
    double horizon = 1.0;
    double dt = 1e-2;
    std::int64_t n_paths = 1;
    std::uint64_t seed = 0;
    PsiSpec psi;
    VolModel vol;
    double rho = 0.0;
    int n_workers = 0; // 0: hardware concurrency

    int steps() const {
        const double raw = horizon / dt;
        const int n = static_cast<int>(std::llround(raw));
        if (n < 1 || std::fabs(raw - n) > 1e-9 * std::max(1.0, raw))
            throw config_error("horizon must be an integral number of steps");
        return n;
    }

    void validate() const {
        if (!(alpha > 0.0)) throw config_error("alpha must be positive");
        if (!(x > 0.0)) throw config_error("initial capital must be positive");
        if (!(dt > 0.0) || !(horizon > 0.0) || dt > horizon)
            throw config_error("need 0 < dt <= horizon");
        if (n_paths < 1) throw config_error("need at least one path");
        if (!(rho >= -1.0 && rho <= 1.0)) throw config_error("rho must lie in [-1, 1]");
        if (p >= 1.0) throw invalid_crra_error("CRRA exponent must satisfy p < 1");
        (void)steps();
    }
};

// Column-per-time storage of simulated paths on a shared grid. All policy
// arrays are derived pathwise from the radial process, so Z0 = 1/B holds
// exactly where both are stored.
struct PathBatch {
    std::vector<double> time;
    std::int64_t n_paths = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    std::string scheme;
    double x = 0.0;
    double alpha = 0.0;

    std::vector<double> radial;       // B
    std::vector<double> deflator;     // Z0 = 1/B
    std::vector<double> z_psi;        // candidate deflator, filled when psi != 0
    std::vector<double> consumption;  // optimal rate, log case
    std::vector<double> wealth;       // optimal wealth, log case
    std::vector<double> mart;         // deflated wealth + cumulative deflated consumption

    std::size_t idx(std::int64_t path, int step) const {
        return static_cast<std::size_t>(path) * (n_steps + 1) + step;
    }

    int grid_index(double t) const {
        const double dt = time[1] - time[0];
        const int k = static_cast<int>(std::llround(t / dt));
        if (k < 0 || k > n_steps || std::fabs(t - k * dt) > 1e-9 * std::max(1.0, t))
            throw std::invalid_argument("time is not on the sample grid");
        return k;
    }

    std::vector<double> column(const std::vector<double>& field, int step) const {
        std::vector<double> col(n_paths);
        for (std::int64_t path = 0; path < n_paths; ++path) col[path] = field[idx(path, step)];
        return col;
    }

    const std::vector<double>& field(const std::string& name) const {
        if (name == "B") return radial;
        if (name == "Z0") return deflator;
        if (name == "Zpsi") return z_psi;
        if (name == "c") return consumption;
        if (name == "X") return wealth;
        if (name == "M") return mart;
        throw std::invalid_argument("unknown process name: " + name);
    }
};

namespace detail {

template <typename Body>
void parallel_paths(std::int64_t n_paths, int n_workers, Body&& body) {
    int workers = n_workers > 0 ? n_workers
                                : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp<int>(workers, 1, 16);
    if (workers == 1 || n_paths < 256) {
        body(0, n_paths);
        return;
    }
    std::vector<std::thread> pool;
    const std::int64_t chunk = (n_paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n_paths, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

// Radial norm of a three-dimensional Brownian motion started at (1, 0, 0):
// each step draws the three coordinate increments exactly, so the marginal
// law at every grid time is exact and the radius stays positive with
// probability one.
inline PathBatch simulate_bessel(const SdeConfig& cfg) {
    cfg.validate();
    PathBatch batch;
    batch.n_paths = cfg.n_paths;
    batch.n_steps = cfg.steps();
    batch.seed = cfg.seed;
    batch.scheme = "3d-brownian-radius";
    batch.x = cfg.x;
    batch.alpha = cfg.alpha;
    batch.time.resize(batch.n_steps + 1);
    for (int k = 0; k <= batch.n_steps; ++k) batch.time[k] = k * cfg.dt;
    batch.radial.assign(static_cast<std::size_t>(cfg.n_paths) * (batch.n_steps + 1), 0.0);

    const CounterRng rng(cfg.seed);
    const double sdt = std::sqrt(cfg.dt);
    const bool with_psi = cfg.psi.kind != PsiSpec::Kind::Zero;
    if (with_psi) {
        batch.z_psi.assign(batch.radial.size(), 0.0);
        batch.scheme += "+log-euler-deflator";
    }
    detail::parallel_paths(cfg.n_paths, cfg.n_workers, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t path = lo; path < hi; ++path) {
            double cx = 1.0, cy = 0.0, cz = 0.0;
            double logz = 0.0;
            batch.radial[batch.idx(path, 0)] = 1.0;
            if (with_psi) batch.z_psi[batch.idx(path, 0)] = 1.0;
            for (int k = 0; k < batch.n_steps; ++k) {
                const double b_prev = batch.radial[batch.idx(path, k)];
                cx += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 0);
                cy += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 1);
                cz += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 2);
                const double b = std::sqrt(cx * cx + cy * cy + cz * cz);
                batch.radial[batch.idx(path, k + 1)] = b;
                if (with_psi) {
                    const double lambda = 1.0 / b_prev;
                    const double dwr = b - b_prev - lambda * cfg.dt;
                    const double dwo = sdt * rng.normal(static_cast<std::uint64_t>(path), k, 3);
                    const double psi = cfg.psi.at(batch.time[k]);
                    logz += -lambda * dwr - psi * dwo -
                            0.5 * (lambda * lambda + psi * psi) * cfg.dt;
                    batch.z_psi[batch.idx(path, k + 1)] = std::exp(logz);
                }
            }
        }
    });
    return batch;
}

// Minimal deflator Z0 = 1/B, pathwise.
inline void minimal_deflator(PathBatch& batch) {
    batch.deflator.resize(batch.radial.size());
    for (std::size_t i = 0; i < batch.radial.size(); ++i)
        batch.deflator[i] = 1.0 / batch.radial[i];
}

struct DeficitStat {
    double t = 0.0;
    double mean = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double half_width = 0.0;
    double deficit = 0.0; // 1 - mean
    std::size_t n = 0;
};

// Strict-local-martingale certificate: the sample mean of Z0 at time t with
// a normal-approximation confidence interval. A CI upper bound below one
// certifies the expectation deficit at that time.
inline DeficitStat expectation_deficit(const PathBatch& batch, double t, double level = 0.99) {
    if (batch.deflator.empty()) throw std::logic_error("minimal deflator not filled");
    if (batch.n_paths < 2)
        throw statistics_error("expectation deficit needs at least two paths for a CI");
    const int k = batch.grid_index(t);
    const auto col = batch.column(batch.deflator, k);
    const auto ci = stats::mean_ci(col, level);
    DeficitStat out;
    out.t = t;
    out.mean = ci.mean;
    out.ci_lo = ci.lo;
    out.ci_hi = ci.hi;
    out.half_width = ci.half_width;
    out.deficit = 1.0 - ci.mean;
    out.n = ci.n;
    return out;
}

// Optimal log-utility policy along each path:
//   c = alpha exp(-alpha t) x / Z0,  X = exp(-alpha t) x / Z0,
// and the deflated-wealth-plus-consumption process
//   M = X Z0 + integral of c Z0, trapezoidal on the grid.
inline void log_optimal_policy(const SdeConfig& cfg, PathBatch& batch) {
    if (cfg.p != 0.0) throw invalid_crra_error("the closed-form policy is the log case (p = 0)");
    if (batch.deflator.empty()) minimal_deflator(batch);
    const std::size_t total = batch.radial.size();
    batch.consumption.resize(total);
    batch.wealth.resize(total);
    batch.mart.resize(total);
    const double dt = batch.time[1] - batch.time[0];
    detail::parallel_paths(batch.n_paths, cfg.n_workers, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t path = lo; path < hi; ++path) {
            double integral = 0.0;
            double prev_cz = 0.0;
            for (int k = 0; k <= batch.n_steps; ++k) {
                const std::size_t i = batch.idx(path, k);
                const double decay = std::exp(-cfg.alpha * batch.time[k]);
                batch.consumption[i] = cfg.alpha * decay * cfg.x / batch.deflator[i];
                batch.wealth[i] = decay * cfg.x / batch.deflator[i];
                const double cz = batch.consumption[i] * batch.deflator[i];
                if (k > 0) integral += 0.5 * dt * (prev_cz + cz);
                prev_cz = cz;
                batch.mart[i] = batch.wealth[i] * batch.deflator[i] + integral;
            }
        }
    });
}

// max |M - x| over paths and grid points; bounded by the trapezoid error of
// the deterministic integrand alpha x exp(-alpha t).
inline double pathwise_invariant_check(const PathBatch& batch) {
    if (batch.mart.empty()) throw std::logic_error("log policy not filled");
    double worst = 0.0;
    for (double m : batch.mart) worst = std::max(worst, std::fabs(m - batch.x));
    return worst;
}

struct PotentialRow {
    double t = 0.0;
    double mean = 0.0;   // E[X Z0]
    double target = 0.0; // x exp(-alpha t)
};

inline std::vector<PotentialRow> potential_decay(const PathBatch& batch,
                                                 std::span<const double> times) {
    if (batch.wealth.empty()) throw std::logic_error("log policy not filled");
    std::vector<PotentialRow> rows;
    for (double t : times) {
        const int k = batch.grid_index(t);
        stats::KahanSum sum;
        for (std::int64_t path = 0; path < batch.n_paths; ++path)
            sum.add(batch.wealth[batch.idx(path, k)] * batch.deflator[batch.idx(path, k)]);
        rows.push_back({t, sum.value() / static_cast<double>(batch.n_paths),
                        batch.x * std::exp(-batch.alpha * t)});
    }
    return rows;
}

// Truncated budget of the log policy plus its closed-form tail: the
// integrand c Z0 = alpha x exp(-alpha t) is deterministic, so the truncated
// part is pure quadrature and the tail is x exp(-alpha T).
struct BudgetSplit {
    double truncated = 0.0;
    double tail = 0.0;
    double total = 0.0;
};

inline BudgetSplit log_budget_identity(const PathBatch& batch) {
    if (batch.consumption.empty()) throw std::logic_error("log policy not filled");
    const double dt = batch.time[1] - batch.time[0];
    stats::KahanSum sum;
    for (int k = 0; k <= batch.n_steps; ++k) {
        stats::KahanSum col;
        for (std::int64_t path = 0; path < batch.n_paths; ++path)
            col.add(batch.consumption[batch.idx(path, k)] * batch.deflator[batch.idx(path, k)]);
        const double mean = col.value() / static_cast<double>(batch.n_paths);
        sum.add(((k == 0 || k == batch.n_steps) ? 0.5 : 1.0) * dt * mean);
    }
    BudgetSplit out;
    out.truncated = sum.value();
    out.tail = batch.x * std::exp(-batch.alpha * batch.time.back());
    out.total = out.truncated + out.tail;
    return out;
}

struct DualScanRow {
    double psi = 0.0;
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double half_width = 0.0;
};

// Monte Carlo dual objective E[ int_0^T exp(-alpha t) V(y Z_psi exp(alpha t)) dt ]
// per constant psi, with common random numbers across the psi grid. The
// candidate deflators are stochastic exponentials
//   Z_psi = exp( sum [ -lambda dW - psi dWperp - (lambda^2 + psi^2) dt / 2 ] )
// driven by the radial Brownian increments and an independent orthogonal
// stream, stepped by log-Euler.
inline std::vector<DualScanRow> power_dual_scan(const SdeConfig& cfg,
                                                std::span<const double> psi_grid, double y = 1.0) {
    cfg.validate();
    if (cfg.p >= 1.0) throw invalid_crra_error("CRRA exponent must satisfy p < 1");
    if (!(y > 0.0)) throw std::domain_error("dual argument must be positive");

    const int n_steps = cfg.steps();
    const double dt = cfg.dt;
    const CounterRng rng(cfg.seed);
    const double q = cfg.p / (cfg.p - 1.0);
    const auto conj = [&](double z) {
        return cfg.p == 0.0 ? -std::log(z) - 1.0 : -std::pow(z, q) / q;
    };

    const std::size_t n_psi = psi_grid.size();
    std::vector<std::vector<double>> per_path(n_psi,
                                              std::vector<double>(cfg.n_paths, 0.0));

    detail::parallel_paths(cfg.n_paths, cfg.n_workers, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> lambda(n_steps), dwr(n_steps), dwo(n_steps);
        std::vector<double> logz(n_psi), integral(n_psi), prev(n_psi);
        const double sdt = std::sqrt(dt);
        for (std::int64_t path = lo; path < hi; ++path) {
            double cx = 1.0, cy = 0.0, cz = 0.0;
            double b_prev = 1.0;
            for (int k = 0; k < n_steps; ++k) {
                cx += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 0);
                cy += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 1);
                cz += sdt * rng.normal(static_cast<std::uint64_t>(path), k, 2);
                const double b = std::sqrt(cx * cx + cy * cy + cz * cz);
                lambda[k] = 1.0 / b_prev;
                dwr[k] = b - b_prev - lambda[k] * dt; // radial Brownian increment, Euler split
                dwo[k] = sdt * rng.normal(static_cast<std::uint64_t>(path), k, 3);
                b_prev = b;
            }
            for (std::size_t j = 0; j < n_psi; ++j) {
                logz[j] = 0.0;
                integral[j] = 0.0;
                prev[j] = conj(y); // integrand at t = 0, Z = 1
            }
            for (int k = 0; k < n_steps; ++k) {
                const double t_next = (k + 1) * dt;
                for (std::size_t j = 0; j < n_psi; ++j) {
                    const double psi = psi_grid[j];
                    logz[j] += -lambda[k] * dwr[k] - psi * dwo[k] -
                               0.5 * (lambda[k] * lambda[k] + psi * psi) * dt;
                    const double integrand = std::exp(-cfg.alpha * t_next) *
                                             conj(y * std::exp(logz[j] + cfg.alpha * t_next));
                    integral[j] += 0.5 * dt * (prev[j] + integrand);
                    prev[j] = integrand;
                }
            }
            for (std::size_t j = 0; j < n_psi; ++j) per_path[j][path] = integral[j];
        }
    });

    std::vector<DualScanRow> rows;
    for (std::size_t j = 0; j < n_psi; ++j) {
        const auto ci = stats::mean_ci(per_path[j], 0.99);
        rows.push_back({psi_grid[j], ci.mean, ci.lo, ci.hi, ci.half_width});
    }
    return rows;
}

// z-scores of the mean increments of a stored process between consecutive
// requested times (the first window starts at the grid origin).
//
// `resolution` is the caller's bound on deterministic numerical bias in one
// increment (e.g. the quadrature error of a time integral inside the
// process); it widens the denominator so scheme bias below that bound is not
// mistaken for a statistical drift. Degenerate samples additionally get a
// tiny absolute floor so constant processes report z = 0.
inline std::vector<double> martingale_increment_test(const PathBatch& batch,
                                                     const std::string& process,
                                                     std::span<const double> times,
                                                     double resolution = 0.0) {
    const auto& values = batch.field(process);
    if (values.empty()) throw std::logic_error("process not filled: " + process);
    std::vector<double> zscores;
    int prev_k = 0;
    for (double t : times) {
        const int k = batch.grid_index(t);
        std::vector<double> incr(batch.n_paths);
        for (std::int64_t path = 0; path < batch.n_paths; ++path)
            incr[path] = values[batch.idx(path, k)] - values[batch.idx(path, prev_k)];
        const double mean = stats::mean(incr);
        double sem = 0.0;
        if (batch.n_paths > 1)
            sem = std::sqrt(stats::sample_variance(incr, mean) /
                            static_cast<double>(batch.n_paths));
        const double denom = std::max(std::sqrt(sem * sem + resolution * resolution), 1e-12);
        zscores.push_back(mean / denom);
        prev_k = k;
    }
    return zscores;
}

} // namespace duallab
