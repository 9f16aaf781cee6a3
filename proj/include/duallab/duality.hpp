#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "duallab/errors.hpp"
#include "duallab/event_tree.hpp"
#include "duallab/tree_ops.hpp"
#include "duallab/utility.hpp"

namespace duallab {

namespace detail {

inline double golden_min(const std::function<double(double)>& f, double lo, double hi,
                         double rel_tol = 1e-10) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > rel_tol * (std::fabs(lo) + std::fabs(hi))) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = f(d);
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

struct DualSolverOptions {
    double stationarity_tol = 1e-9;
    std::size_t max_iterations = 300000;
    double floor = kTransitionFloor;
    double initial_step = 1.0;
    std::optional<TransitionAssignment> initial;
};

struct DualSolution {
    double y = 1.0;
    Deflator deflator;  // normalized to Z(root) = 1
    TransitionAssignment transitions;
    double value = 0.0;
    double projected_gradient_norm = 0.0;
    std::size_t iterations = 0;
};

// Dual objective sum_t kappa_t E[ V(gamma_t y Z_t) ] for a unit-root
// transition deflator Z.
inline double dual_objective(const EventTree& tree, const Utility& u, double y,
                             const Deflator& z) {
    if (std::fabs(z.value[0] - 1.0) > 1e-12)
        throw std::invalid_argument("dual_objective expects a unit-root deflator");
    double value = 0.0;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const int t = tree.node(static_cast<int>(i)).t;
        value += tree.kappa(t) * tree.path_prob(static_cast<int>(i)) *
                 u.conjugate(tree.gamma(t) * y * z.value[i]);
    }
    if (!std::isfinite(value)) throw dual_infinite_error("dual objective is not finite");
    return value;
}

// Minimizes the dual objective over transition-built deflators by projected
// gradient with Armijo backtracking on the concatenated polytope
// coordinates. Nodes whose polytope is a single point are frozen out; a
// complete tree therefore returns its unique deflator with zero iterations.
inline DualSolution solve_dual(const EventTree& tree, const Utility& u, double y,
                               const std::vector<MartingalePolytope>& polys,
                               const DualSolverOptions& opt = {}) {
    if (!(y > 0.0)) throw std::domain_error("dual root value must be positive");
    const std::size_t n_nodes = tree.num_nodes();

    TransitionAssignment q(n_nodes);
    std::vector<int> free_nodes;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (tree.is_terminal(static_cast<int>(i))) continue;
        q[i] = opt.initial && !(*opt.initial)[i].empty() ? (*opt.initial)[i] : polys[i].feasible;
        if (!polys[i].contains(q[i], 1e-7)) q[i] = polys[i].feasible;
        if (!polys[i].singleton()) free_nodes.push_back(static_cast<int>(i));
        else q[i] = polys[i].vertices[0];
    }

    std::vector<double> z(n_nodes, 1.0), weight(n_nodes, 0.0), afactor(n_nodes, 0.0);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const int t = tree.node(static_cast<int>(i)).t;
        weight[i] = tree.kappa(t) * tree.path_prob(static_cast<int>(i));
        afactor[i] = tree.gamma(t) * y;
    }

    const auto forward_value = [&](const TransitionAssignment& trans, std::vector<double>& zv) {
        zv[0] = 1.0;
        double value = 0.0;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            const auto& node = tree.node(static_cast<int>(i));
            if (!node.children.empty()) {
                for (std::size_t ci = 0; ci < node.children.size(); ++ci) {
                    const int c = node.children[ci];
                    zv[c] = zv[i] * trans[i][ci] / tree.node(c).prob;
                }
            }
            value += weight[i] * u.conjugate(afactor[i] * zv[i]);
        }
        if (!std::isfinite(value))
            throw dual_infinite_error("dual objective not finite along the iterate path");
        return value;
    };

    double value = forward_value(q, z);

    DualSolution sol;
    sol.y = y;
    if (free_nodes.empty()) {
        sol.transitions = q;
        sol.deflator = deflator_from_transitions(tree, q, 1.0, opt.floor);
        sol.value = value;
        return sol;
    }

    // Subtree accumulation for the gradient: grad q(node->child) =
    // T(child) / q(node->child) with
    // T(n) = w_n V'(a_n Z_n) a_n Z_n + sum of children T.
    std::vector<double> subtree(n_nodes, 0.0);
    TransitionAssignment grad(n_nodes);
    for (int i : free_nodes) grad[i].assign(q[i].size(), 0.0);

    const auto compute_gradient = [&]() {
        for (std::size_t idx = n_nodes; idx-- > 0;) {
            const auto& node = tree.node(static_cast<int>(idx));
            const double az = afactor[idx] * z[idx];
            subtree[idx] = weight[idx] * u.conjugate_derivative(az) * az;
            for (int c : node.children) subtree[idx] += subtree[c];
        }
        for (int i : free_nodes) {
            const auto& node = tree.node(i);
            for (std::size_t ci = 0; ci < node.children.size(); ++ci)
                grad[i][ci] = subtree[node.children[ci]] / q[i][ci];
        }
    };

    double step = opt.initial_step;
    TransitionAssignment cand = q;
    std::vector<double> z_cand(n_nodes, 1.0);

    const auto take_step = [&](double s) {
        double inner = 0.0;
        for (int i : free_nodes) {
            std::vector<double> shifted(q[i].size());
            for (std::size_t ci = 0; ci < q[i].size(); ++ci)
                shifted[ci] = q[i][ci] - s * grad[i][ci];
            cand[i] = polys[i].project(shifted);
            for (std::size_t ci = 0; ci < q[i].size(); ++ci)
                inner += grad[i][ci] * (cand[i][ci] - q[i][ci]);
        }
        return inner;
    };

    // Once objective differences shrink below float resolution the Armijo
    // certificate is unavailable, but the analytic gradient is still exact;
    // a fixed-step contraction phase then finishes the work, with the
    // proximal residual as the only monitor.
    double blind_step = 0.0;
    double last_pg = std::numeric_limits<double>::infinity();
    int worsening = 0;

    for (sol.iterations = 0; sol.iterations < opt.max_iterations; ++sol.iterations) {
        compute_gradient();

        // Unit-step proximal residual doubles as the stopping certificate.
        double pg2 = 0.0;
        for (int i : free_nodes) {
            std::vector<double> shifted(q[i].size());
            for (std::size_t ci = 0; ci < q[i].size(); ++ci) shifted[ci] = q[i][ci] - grad[i][ci];
            const auto proj = polys[i].project(shifted);
            for (std::size_t ci = 0; ci < q[i].size(); ++ci) {
                const double delta = q[i][ci] - proj[ci];
                pg2 += delta * delta;
            }
        }
        sol.projected_gradient_norm = std::sqrt(pg2);
        if (sol.projected_gradient_norm <= opt.stationarity_tol) break;

        bool accepted = false;
        double local_step = step;
        for (int bt = 0; bt < 80; ++bt) {
            const double inner = take_step(local_step);
            if (inner >= -1e-14 * (1.0 + std::fabs(value))) break; // below float resolution
            const double cand_value = forward_value(cand, z_cand);
            if (cand_value <= value + 1e-4 * inner) {
                for (int i : free_nodes) q[i] = cand[i];
                z.swap(z_cand);
                value = cand_value;
                step = std::min(local_step * 1.3, 1e6);
                accepted = true;
                break;
            }
            local_step *= 0.5;
        }
        if (!accepted) {
            if (blind_step == 0.0) blind_step = std::min(step, 1.0);
            if (sol.projected_gradient_norm > 0.999 * last_pg) {
                if (++worsening >= 10) {
                    blind_step *= 0.5;
                    worsening = 0;
                    if (blind_step < 1e-10) break;
                }
            } else {
                worsening = 0;
            }
            take_step(blind_step);
            for (int i : free_nodes) q[i] = cand[i];
            value = forward_value(q, z);
        }
        last_pg = sol.projected_gradient_norm;
    }

    sol.transitions = q;
    sol.deflator = deflator_from_transitions(tree, q, 1.0, opt.floor);
    sol.value = value;
    return sol;
}

inline DualSolution solve_dual(const EventTree& tree, const Utility& u, double y,
                               const DualSolverOptions& opt = {}) {
    return solve_dual(tree, u, y, all_polytopes(tree, opt.floor), opt);
}

// First-order consumption candidate c = I(gamma_t y Z_t) = -V'(gamma_t y Z_t).
inline ConsumptionPlan candidate_consumption(const EventTree& tree, const Utility& u, double y,
                                             const Deflator& z) {
    ConsumptionPlan plan;
    plan.rate.resize(tree.num_nodes());
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const int t = tree.node(static_cast<int>(i)).t;
        plan.rate[i] = u.inverse_marginal(tree.gamma(t) * y * z.value[i]);
    }
    return plan;
}

struct CalibrationResult {
    double y_star = 0.0;
    DualSolution dual;       // solved at y_star
    ConsumptionPlan plan;    // candidate consumption at y_star
    double budget = 0.0;     // <c, Z> at y_star
    std::size_t evaluations = 0;
};

struct CalibrationOptions {
    double bracket_lo = 1e-8;
    double bracket_hi = 1e8;
    double budget_tol = 1e-11;
    DualSolverOptions dual;
};

// Finds y with <c(y), Z(y)> = x. The budget map is strictly decreasing in y
// because the inverse marginal is, so a sign-bracketing bisection down to
// relative width 1e-6 followed by secant polish pins the unique root.
inline CalibrationResult calibrate_y(const EventTree& tree, const Utility& u, double x,
                                     CalibrationOptions opt = {}) {
    if (!(x > 0.0)) throw std::domain_error("initial capital must be positive");
    const auto polys = all_polytopes(tree, opt.dual.floor);

    CalibrationResult out;
    DualSolverOptions dual_opt = opt.dual;

    const auto eval = [&](double y) {
        DualSolution sol = solve_dual(tree, u, y, polys, dual_opt);
        dual_opt.initial = sol.transitions; // warm start subsequent solves
        ConsumptionPlan plan = candidate_consumption(tree, u, y, sol.deflator);
        const double budget = budget_pairing(tree, plan, sol.deflator);
        ++out.evaluations;
        return std::tuple<double, DualSolution, ConsumptionPlan>(budget - x, std::move(sol),
                                                                 std::move(plan));
    };

    double lo = opt.bracket_lo, hi = opt.bracket_hi;
    auto [g_lo, sol_lo, plan_lo] = eval(lo);
    auto [g_hi, sol_hi, plan_hi] = eval(hi);
    if (!(g_lo >= 0.0 && g_hi <= 0.0))
        throw calibration_error("no budget sign change inside the bracket [1e-8, 1e8]");

    // Bisection to a narrow relative bracket.
    double ya = lo, yb = hi, ga = g_lo, gb = g_hi;
    while (yb - ya > 1e-6 * ya) {
        const double ym = std::sqrt(ya * yb);
        auto [gm, solm, planm] = eval(ym);
        if (gm >= 0.0) {
            ya = ym;
            ga = gm;
        } else {
            yb = ym;
            gb = gm;
        }
        if (std::fabs(gm) <= opt.budget_tol * std::max(1.0, x)) {
            out.y_star = ym;
            out.dual = std::move(solm);
            out.plan = std::move(planm);
            out.budget = gm + x;
            return out;
        }
    }

    // Secant polish inside the bracket.
    double y0 = ya, g0 = ga, y1 = yb, g1 = gb;
    for (int it = 0; it < 100; ++it) {
        double yn = (g1 != g0) ? y1 - g1 * (y1 - y0) / (g1 - g0) : 0.5 * (ya + yb);
        if (!(yn > ya && yn < yb)) yn = 0.5 * (ya + yb);
        auto [gn, soln, plann] = eval(yn);
        if (gn >= 0.0) {
            ya = yn;
        } else {
            yb = yn;
        }
        y0 = y1;
        g0 = g1;
        y1 = yn;
        g1 = gn;
        if (std::fabs(gn) <= opt.budget_tol * std::max(1.0, x)) {
            out.y_star = yn;
            out.dual = std::move(soln);
            out.plan = std::move(plann);
            out.budget = gn + x;
            return out;
        }
    }
    throw calibration_error("budget root polish did not reach tolerance");
}

struct PrimalSolverOptions {
    double tau_init = 0.1;
    double tau_min = 1e-12;
    double tau_factor = 0.1;
    std::size_t max_newton_per_stage = 80;
};

struct PrimalSolution {
    ConsumptionPlan plan;
    Strategy strategy;
    double value = 0.0;
    double barrier_parameter = 0.0;
    std::size_t newton_steps = 0;
};

inline bool oracle_scale(const EventTree& tree) {
    if (tree.horizon() > 4 || tree.num_nodes() > 400) return false;
    for (const auto& n : tree.nodes())
        if (n.children.size() > 3) return false;
    return true;
}

// Direct concave program over the joint variable vector (consumption rates
// at every node, holdings at every non-terminal node), log-barriered on
// wealth positivity and solved by damped Newton with a decreasing barrier
// parameter. This is the independent primal oracle checked against the dual
// route, so it deliberately shares no machinery with solve_dual.
inline PrimalSolution solve_primal_direct(const EventTree& tree, const Utility& u, double x,
                                          const PrimalSolverOptions& opt = {}) {
    if (!(x > 0.0)) throw std::domain_error("initial capital must be positive");
    if (!oracle_scale(tree))
        throw std::invalid_argument("solve_primal_direct is restricted to oracle-scale trees");

    const std::size_t n_nodes = tree.num_nodes();
    const std::size_t d = tree.num_assets();
    const double dt = tree.dt();

    std::vector<int> nonterm;
    std::vector<int> nonterm_index(n_nodes, -1);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (!tree.is_terminal(static_cast<int>(i))) {
            nonterm_index[i] = static_cast<int>(nonterm.size());
            nonterm.push_back(static_cast<int>(i));
        }
    }
    const std::size_t nv = n_nodes + nonterm.size() * d;
    const auto h_var = [&](int node, std::size_t asset) {
        return n_nodes + static_cast<std::size_t>(nonterm_index[node]) * d + asset;
    };

    // Affine coefficient lists: X(n) = x + sum coef * v.
    using Affine = std::vector<std::pair<std::size_t, double>>;
    std::vector<Affine> wealth_coef(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        for (int c : n.children) {
            Affine a = wealth_coef[i];
            a.emplace_back(i, -dt);
            for (std::size_t asset = 0; asset < d; ++asset)
                a.emplace_back(h_var(static_cast<int>(i), asset),
                               tree.node(c).prices[asset] - n.prices[asset]);
            wealth_coef[c] = std::move(a);
        }
    }
    // Barriers: wealth at every non-root node, then terminal post-consumption slack.
    std::vector<Affine> barrier;
    for (std::size_t i = 1; i < n_nodes; ++i) barrier.push_back(wealth_coef[i]);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (!tree.is_terminal(static_cast<int>(i))) continue;
        Affine a = wealth_coef[i];
        a.emplace_back(i, -dt);
        barrier.push_back(std::move(a));
    }

    std::vector<double> weight(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i)
        weight[i] = tree.kappa(tree.node(static_cast<int>(i)).t) * tree.path_prob(static_cast<int>(i));

    std::vector<double> v(nv, 0.0);
    const double c0 = 0.3 * x / ((tree.horizon() + 1) * dt);
    for (std::size_t i = 0; i < n_nodes; ++i) v[i] = c0;

    const auto affine_value = [&](const Affine& a, const std::vector<double>& vars) {
        double s = x;
        for (const auto& [j, coef] : a) s += coef * vars[j];
        return s;
    };
    const auto objective = [&](const std::vector<double>& vars, double tau,
                               bool* feasible) -> double {
        double val = 0.0;
        *feasible = true;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            if (!(vars[i] > 0.0)) {
                *feasible = false;
                return -std::numeric_limits<double>::infinity();
            }
            val += weight[i] * u.value(vars[i]);
        }
        for (const auto& b : barrier) {
            const double g = affine_value(b, vars);
            if (!(g > 0.0)) {
                *feasible = false;
                return -std::numeric_limits<double>::infinity();
            }
            val += tau * std::log(g);
        }
        return val;
    };

    bool feasible = false;
    double phi = objective(v, opt.tau_init, &feasible);
    if (!feasible || !std::isfinite(phi))
        throw oracle_error("no strictly feasible starting plan; degenerate configuration");

    PrimalSolution sol;
    std::vector<double> grad(nv);
    linalg::Matrix hneg(nv, nv);

    for (double tau = opt.tau_init;; tau *= opt.tau_factor) {
        tau = std::max(tau, opt.tau_min);
        phi = objective(v, tau, &feasible);
        for (std::size_t it = 0; it < opt.max_newton_per_stage; ++it) {
            std::fill(grad.begin(), grad.end(), 0.0);
            std::fill(hneg.a.begin(), hneg.a.end(), 0.0);
            for (std::size_t i = 0; i < n_nodes; ++i) {
                grad[i] += weight[i] * u.marginal(v[i]);
                hneg(i, i) += weight[i] * (-u.marginal_derivative(v[i]));
            }
            for (const auto& b : barrier) {
                const double g = affine_value(b, v);
                const double inv = tau / g;
                const double inv2 = tau / (g * g);
                for (const auto& [j1, c1] : b) {
                    grad[j1] += inv * c1;
                    for (const auto& [j2, c2] : b) hneg(j1, j2) += inv2 * c1 * c2;
                }
            }
            linalg::Matrix chol = hneg;
            double ridge = 0.0;
            while (!linalg::cholesky(chol)) {
                ridge = (ridge == 0.0) ? 1e-12 : ridge * 100.0;
                if (ridge > 1e3) throw oracle_error("barrier Hessian could not be factorized");
                chol = hneg;
                for (std::size_t i = 0; i < nv; ++i) chol(i, i) += ridge;
            }
            const auto dir = linalg::cholesky_solve(chol, grad);
            const double decrement = linalg::dot(grad, dir);
            if (decrement <= 1e-15 * (1.0 + std::fabs(phi))) break;

            double alpha = 1.0;
            bool moved = false;
            std::vector<double> trial(nv);
            for (int bt = 0; bt < 60; ++bt) {
                for (std::size_t j = 0; j < nv; ++j) trial[j] = v[j] + alpha * dir[j];
                bool ok = false;
                const double cand = objective(trial, tau, &ok);
                if (ok && cand >= phi + 1e-4 * alpha * decrement) {
                    v.swap(trial);
                    phi = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            ++sol.newton_steps;
            if (!moved) break;
        }
        if (tau <= opt.tau_min) break;
    }

    sol.plan.rate.assign(v.begin(), v.begin() + n_nodes);
    sol.strategy = Strategy::zero(tree);
    for (int m : nonterm)
        for (std::size_t asset = 0; asset < d; ++asset)
            sol.strategy.units[m][asset] = v[h_var(m, asset)];
    sol.barrier_parameter = opt.tau_min;
    double val = 0.0;
    for (std::size_t i = 0; i < n_nodes; ++i) val += weight[i] * u.value(sol.plan.rate[i]);
    sol.value = val;
    return sol;
}

// Deflated-wealth backward recursion:
//   X(n) Z(n) = c(n) dt Z(n) + E[ X(child) Z(child) | n ],
// terminal wealth exactly covering terminal consumption.
inline std::vector<double> optimal_wealth_from_dual(const EventTree& tree,
                                                    const ConsumptionPlan& plan,
                                                    const Deflator& z) {
    std::vector<double> deflated(tree.num_nodes(), 0.0), wealth(tree.num_nodes(), 0.0);
    for (std::size_t idx = tree.num_nodes(); idx-- > 0;) {
        const auto& n = tree.node(static_cast<int>(idx));
        double val = plan.rate[idx] * tree.dt() * z.value[idx];
        for (int c : n.children) val += tree.node(c).prob * deflated[c];
        deflated[idx] = val;
        wealth[idx] = val / z.value[idx];
    }
    return wealth;
}

struct DualityReport {
    double x = 0.0;
    double y_star = 0.0;
    double u_of_x = 0.0;
    std::string u_source; // "direct" or "candidate"
    double v_of_y = 0.0;
    double conjugacy_gap = 0.0;
    double pdc_max_residual = 0.0;
    double budget_residual = 0.0;
    double martingale_max_residual = 0.0;
    double terminal_deflated_wealth_max = 0.0;
    double derivative_identity_residual_primal = 0.0;
    double derivative_identity_residual_dual = 0.0;
    std::vector<double> deflated_wealth_by_time;
    double clock_tail_weight = 0.0;
    double dual_stationarity = 0.0;
    std::size_t dual_iterations = 0;
};

namespace detail {

template <typename F>
auto staged(const char* stage, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("[") + stage + "] " + e.what());
    }
}

inline double candidate_primal_value(const EventTree& tree, const Utility& u,
                                     const ConsumptionPlan& plan) {
    double val = 0.0;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        val += tree.kappa(n.t) * tree.path_prob(static_cast<int>(i)) * u.value(plan.rate[i]);
    }
    return val;
}

} // namespace detail

// Runs the whole pipeline at one (tree, utility, x) instance and certifies
// every optimality relation with explicit residuals.
inline DualityReport duality_report(const EventTree& tree, const Utility& u, double x,
                                    CalibrationOptions opt = {}) {
    DualityReport rep;
    rep.x = x;
    rep.clock_tail_weight = tree.clock_tail_weight();

    auto calib = detail::staged("calibrate_y", [&] { return calibrate_y(tree, u, x, opt); });
    rep.y_star = calib.y_star;
    rep.v_of_y = calib.dual.value;
    rep.budget_residual = std::fabs(calib.budget - x) * calib.y_star;
    rep.dual_stationarity = calib.dual.projected_gradient_norm;
    rep.dual_iterations = calib.dual.iterations;

    const bool direct = oracle_scale(tree);
    const auto primal_value_at = [&](double cap) {
        if (direct)
            return detail::staged("solve_primal_direct",
                                  [&] { return solve_primal_direct(tree, u, cap).value; });
        auto c = calibrate_y(tree, u, cap, opt);
        return detail::candidate_primal_value(tree, u, c.plan);
    };
    rep.u_of_x = direct ? detail::staged("solve_primal_direct",
                                         [&] { return solve_primal_direct(tree, u, x).value; })
                        : detail::candidate_primal_value(tree, u, calib.plan);
    rep.u_source = direct ? "direct" : "candidate";

    // Conjugacy: u(x) against inf_y [v(y) + x y] located around y*.
    {
        const auto polys = all_polytopes(tree, opt.dual.floor);
        DualSolverOptions dopt = opt.dual;
        dopt.initial = calib.dual.transitions;
        const auto h = [&](double logy) {
            const double y = std::exp(logy);
            DualSolution s = solve_dual(tree, u, y, polys, dopt);
            return s.value + x * y;
        };
        const double l_star = detail::staged("conjugacy_scan", [&] {
            return detail::golden_min(h, std::log(calib.y_star / 8.0),
                                      std::log(calib.y_star * 8.0), 1e-11);
        });
        rep.conjugacy_gap = rep.u_of_x - h(l_star);
    }

    // Pointwise first-order condition U'(c) = gamma y* Z.
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const double target = tree.gamma(tree.node(static_cast<int>(i)).t) * calib.y_star *
                              calib.dual.deflator.value[i];
        const double res = std::fabs(u.marginal(calib.plan.rate[i]) - target) / target;
        rep.pdc_max_residual = std::max(rep.pdc_max_residual, res);
    }

    // Martingale certificate for deflated wealth plus cumulative deflated
    // consumption, and the potential structure of deflated wealth.
    const auto wealth = optimal_wealth_from_dual(tree, calib.plan, calib.dual.deflator);
    {
        const auto& z = calib.dual.deflator.value;
        std::vector<double> cum(tree.num_nodes(), 0.0);
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            for (int c : n.children)
                cum[c] = cum[i] + calib.plan.rate[i] * z[i] * tree.dt();
        }
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            if (n.children.empty()) {
                const double post = (wealth[i] - calib.plan.rate[i] * tree.dt()) * z[i];
                rep.terminal_deflated_wealth_max =
                    std::max(rep.terminal_deflated_wealth_max, std::fabs(post));
                continue;
            }
            double expected = 0.0;
            for (int c : n.children) expected += tree.node(c).prob * (wealth[c] * z[c] + cum[c]);
            const double m_here = wealth[i] * z[i] + cum[i];
            rep.martingale_max_residual =
                std::max(rep.martingale_max_residual, std::fabs(expected - m_here));
        }
        std::vector<double> xz(tree.num_nodes());
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) xz[i] = wealth[i] * z[i];
        for (int t = 0; t <= tree.horizon(); ++t)
            rep.deflated_wealth_by_time.push_back(slice_expectation(tree, xz, t));
    }

    // Derivative identities via central differences on u and v.
    {
        const double hx = 1e-4 * x;
        const double du = (primal_value_at(x + hx) - primal_value_at(x - hx)) / (2.0 * hx);
        double rhs = 0.0;
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            rhs += tree.kappa(n.t) * tree.path_prob(static_cast<int>(i)) *
                   u.marginal(calib.plan.rate[i]) * calib.plan.rate[i];
        }
        rep.derivative_identity_residual_primal = std::fabs(x * du - rhs);

        const auto polys = all_polytopes(tree, opt.dual.floor);
        DualSolverOptions dopt = opt.dual;
        dopt.initial = calib.dual.transitions;
        const double hy = 1e-4 * calib.y_star;
        const double vp = solve_dual(tree, u, calib.y_star + hy, polys, dopt).value;
        const double vm = solve_dual(tree, u, calib.y_star - hy, polys, dopt).value;
        const double dv = (vp - vm) / (2.0 * hy);
        // y v'(y) = E[ sum_t V'(gamma_t Y_t) Y_t dt ] with Y = y* Z.
        double rhs_dual = 0.0;
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            const double scaled = calib.y_star * calib.dual.deflator.value[i];
            rhs_dual += tree.path_prob(static_cast<int>(i)) *
                        u.conjugate_derivative(tree.gamma(n.t) * scaled) * scaled * tree.dt();
        }
        rep.derivative_identity_residual_dual = std::fabs(calib.y_star * dv - rhs_dual);
    }

    return rep;
}

struct ConjugacyScan {
    std::vector<double> x_grid, y_grid;
    std::vector<double> u_values;           // per x
    std::vector<double> v_values;           // per y
    std::vector<double> inf_values, gaps;   // per x
};

// Tabulates u along x_grid and v along y_grid and, per x, the infimum of
// v(y) + x y seeded from the best grid cell and polished by golden section.
inline ConjugacyScan conjugacy_scan(const EventTree& tree, const Utility& u,
                                    std::vector<double> x_grid, std::vector<double> y_grid,
                                    CalibrationOptions opt = {}) {
    if (x_grid.size() < 20 || y_grid.size() < 20)
        throw std::invalid_argument("conjugacy scan expects grids of at least 20 points");
    ConjugacyScan scan;
    scan.x_grid = std::move(x_grid);
    scan.y_grid = std::move(y_grid);

    const auto polys = all_polytopes(tree, opt.dual.floor);
    DualSolverOptions dopt = opt.dual;
    const auto v_at = [&](double y) {
        DualSolution s = solve_dual(tree, u, y, polys, dopt);
        dopt.initial = s.transitions;
        return s.value;
    };
    for (double y : scan.y_grid) scan.v_values.push_back(v_at(y));

    const bool direct = oracle_scale(tree);
    for (double x : scan.x_grid) {
        const double ux = direct ? solve_primal_direct(tree, u, x).value
                                 : detail::candidate_primal_value(
                                       tree, u, calibrate_y(tree, u, x, opt).plan);
        scan.u_values.push_back(ux);

        std::size_t best = 0;
        double best_val = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < scan.y_grid.size(); ++j) {
            const double val = scan.v_values[j] + x * scan.y_grid[j];
            if (val < best_val) {
                best_val = val;
                best = j;
            }
        }
        const double lo = scan.y_grid[best > 0 ? best - 1 : 0];
        const double hi = scan.y_grid[std::min(best + 1, scan.y_grid.size() - 1)];
        double inf_val = best_val;
        if (hi > lo) {
            const auto h = [&](double logy) {
                const double y = std::exp(logy);
                return v_at(y) + x * y;
            };
            const double l_star = detail::golden_min(h, std::log(lo), std::log(hi), 1e-11);
            inf_val = std::min(inf_val, h(l_star));
        }
        scan.inf_values.push_back(inf_val);
        scan.gaps.push_back(ux - inf_val);
    }
    return scan;
}

} // namespace duallab
