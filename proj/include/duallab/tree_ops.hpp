#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "duallab/errors.hpp"
#include "duallab/event_tree.hpp"
#include "duallab/linalg.hpp"

namespace duallab {

// Node-indexed consumption rate; the rate at a node is consumed over the
// period that follows it, terminal nodes included.
struct ConsumptionPlan {
    std::vector<double> rate;

    static ConsumptionPlan zero(const EventTree& tree) {
        return {std::vector<double>(tree.num_nodes(), 0.0)};
    }
};

// Units of each asset held over the period following a node. Entries at
// terminal nodes are ignored.
struct Strategy {
    std::vector<std::vector<double>> units;

    static Strategy zero(const EventTree& tree) {
        return {std::vector<std::vector<double>>(tree.num_nodes(),
                                                 std::vector<double>(tree.num_assets(), 0.0))};
    }
};

// Strictly positive node-indexed deflator.
struct Deflator {
    std::vector<double> value;
};

constexpr double kAdmissibilityTol = 1e-12;
constexpr double kTransitionFloor = 1e-9;

// Forward wealth recursion: X(root) = x and
// X(child) = X(node) + H(node) . (S(child) - S(node)) - c(node) dt.
inline std::vector<double> wealth_process(const EventTree& tree, double x, const Strategy& strategy,
                                          const ConsumptionPlan& plan) {
    if (!(x > 0.0)) throw std::domain_error("initial capital must be positive");
    if (plan.rate.size() != tree.num_nodes() || strategy.units.size() != tree.num_nodes())
        throw std::invalid_argument("plan/strategy size must match the tree");
    std::vector<double> wealth(tree.num_nodes(), 0.0);
    wealth[0] = x;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        if (n.children.empty()) continue;
        const auto& h = strategy.units[i];
        for (int c : n.children) {
            double gain = 0.0;
            for (std::size_t a = 0; a < n.prices.size(); ++a)
                gain += h[a] * (tree.node(c).prices[a] - n.prices[a]);
            wealth[c] = wealth[i] + gain - plan.rate[i] * tree.dt();
        }
    }
    return wealth;
}

struct Admissibility {
    bool admissible = true;
    int first_violation = -1;
    double worst_wealth = 0.0;
};

// Solvency at every node, plus the terminal requirement that the final
// consumption fits inside terminal wealth.
inline Admissibility is_admissible(const EventTree& tree, double x, const Strategy& strategy,
                                   const ConsumptionPlan& plan) {
    const auto wealth = wealth_process(tree, x, strategy, plan);
    Admissibility result;
    result.worst_wealth = x;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        double w = wealth[i];
        if (tree.is_terminal(static_cast<int>(i))) w -= plan.rate[i] * tree.dt();
        result.worst_wealth = std::min(result.worst_wealth, w);
        if (w < -kAdmissibilityTol && result.admissible) {
            result.admissible = false;
            result.first_violation = static_cast<int>(i);
        }
    }
    return result;
}

// One-step martingale transition measures through a node:
//   { q : sum q_i = 1,  sum q_i S(child_i) = S(node),  q_i >= floor }.
// Emptiness is a one-step arbitrage, which rules out any deflator.
struct MartingalePolytope {
    int node = -1;
    double floor = kTransitionFloor;
    std::vector<double> feasible;                 // relative-interior point (vertex centroid)
    std::vector<std::vector<double>> null_basis;  // orthonormal; empty when the measure is unique
    std::vector<std::vector<double>> vertices;
    std::vector<std::vector<double>> equality_rows;
    std::vector<double> equality_rhs;

    bool singleton() const { return null_basis.empty(); }

    bool contains(std::span<const double> q, double tol = 1e-9) const {
        if (q.size() != feasible.size()) return false;
        for (double qi : q)
            if (qi < floor - tol) return false;
        for (std::size_t r = 0; r < equality_rows.size(); ++r) {
            double s = -equality_rhs[r];
            for (std::size_t i = 0; i < q.size(); ++i) s += equality_rows[r][i] * q[i];
            if (std::fabs(s) > tol * std::max(1.0, std::fabs(equality_rhs[r]))) return false;
        }
        return true;
    }

    // Exact Euclidean projection onto the polytope. Active sets of the floor
    // constraints are enumerated exhaustively (child counts are tiny), and
    // the unique KKT-consistent candidate is returned.
    std::vector<double> project(std::span<const double> y) const {
        const std::size_t k = feasible.size();
        for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
            std::vector<double> q, lambda;
            if (!solve_pinned(y, mask, q, lambda)) continue;
            bool ok = true;
            for (std::size_t i = 0; i < k && ok; ++i) {
                const bool pinned = mask & (std::size_t{1} << i);
                if (!pinned && q[i] < floor - 1e-12) ok = false;
                if (pinned) {
                    double at_lambda = 0.0;
                    for (std::size_t r = 0; r < equality_rows.size(); ++r)
                        at_lambda += equality_rows[r][i] * lambda[r];
                    const double mu = floor - y[i] - at_lambda;
                    if (mu < -1e-12) ok = false;
                }
            }
            if (!ok) continue;
            for (double& qi : q) qi = std::max(qi, floor);
            return q;
        }
        // Numerical fallback: nearest vertex.
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> bestv = feasible;
        for (const auto& v : vertices) {
            double dist = 0.0;
            for (std::size_t i = 0; i < k; ++i) dist += (v[i] - y[i]) * (v[i] - y[i]);
            if (dist < best) {
                best = dist;
                bestv = v;
            }
        }
        return bestv;
    }

  private:
    // min ||q_F - y_F||^2 over A_F q_F = b - A_P floor, q_P = floor.
    // Writes the solution and the equality multipliers; false when the pinned
    // system is singular.
    bool solve_pinned(std::span<const double> y, std::size_t mask, std::vector<double>& q_out,
                      std::vector<double>& lambda_out) const {
        const std::size_t k = feasible.size();
        const std::size_t r = equality_rows.size();
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < k; ++i)
            if (!(mask & (std::size_t{1} << i))) free.push_back(i);
        if (free.empty()) return false;
        linalg::Matrix gram(r, r);
        std::vector<double> target(r, 0.0);
        for (std::size_t a = 0; a < r; ++a) {
            target[a] = equality_rhs[a];
            for (std::size_t i = 0; i < k; ++i)
                if (mask & (std::size_t{1} << i)) target[a] -= equality_rows[a][i] * floor;
            for (std::size_t i : free) target[a] -= equality_rows[a][i] * y[i];
            for (std::size_t b = 0; b < r; ++b) {
                double s = 0.0;
                for (std::size_t i : free) s += equality_rows[a][i] * equality_rows[b][i];
                gram(a, b) = s;
            }
        }
        auto lambda = linalg::solve(gram, target);
        if (!lambda) return false;
        q_out.assign(k, floor);
        for (std::size_t i : free) {
            double s = y[i];
            for (std::size_t a = 0; a < r; ++a) s += equality_rows[a][i] * (*lambda)[a];
            q_out[i] = s;
        }
        lambda_out = std::move(*lambda);
        return true;
    }
};

namespace detail {

// Independent rows of the equality system, found by elimination on a copy.
inline std::vector<std::size_t> independent_rows(const std::vector<std::vector<double>>& rows,
                                                 double tol = 1e-11) {
    std::vector<std::vector<double>> work = rows;
    std::vector<std::size_t> keep;
    const std::size_t cols = rows.empty() ? 0 : rows[0].size();
    std::vector<bool> used(rows.size(), false);
    for (std::size_t c = 0; c < cols; ++c) {
        std::size_t best_row = rows.size();
        double best = tol;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (used[i]) continue;
            if (std::fabs(work[i][c]) > best) {
                best = std::fabs(work[i][c]);
                best_row = i;
            }
        }
        if (best_row == rows.size()) continue;
        used[best_row] = true;
        keep.push_back(best_row);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (used[i] || work[i][c] == 0.0) continue;
            const double f = work[i][c] / work[best_row][c];
            for (std::size_t j = 0; j < cols; ++j) work[i][j] -= f * work[best_row][j];
        }
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

} // namespace detail

inline MartingalePolytope one_step_martingale_polytope(const EventTree& tree, int node,
                                                       double floor = kTransitionFloor) {
    const auto& n = tree.node(node);
    if (n.children.empty())
        throw std::invalid_argument("martingale polytope is defined at non-terminal nodes");
    const std::size_t k = n.children.size();
    const std::size_t d = tree.num_assets();

    std::vector<std::vector<double>> rows(1 + d, std::vector<double>(k, 0.0));
    std::vector<double> rhs(1 + d, 0.0);
    for (std::size_t i = 0; i < k; ++i) rows[0][i] = 1.0;
    rhs[0] = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t i = 0; i < k; ++i) rows[1 + a][i] = tree.node(n.children[i]).prices[a];
        rhs[1 + a] = n.prices[a];
    }

    MartingalePolytope poly;
    poly.node = node;
    poly.floor = floor;
    const auto keep = detail::independent_rows(rows);
    for (std::size_t i : keep) {
        poly.equality_rows.push_back(rows[i]);
        poly.equality_rhs.push_back(rhs[i]);
    }
    const std::size_t r = poly.equality_rows.size();

    // Vertices: pin all but r coordinates to the floor and solve.
    std::vector<std::size_t> pick(r);
    const auto try_vertex = [&](const std::vector<std::size_t>& free) {
        linalg::Matrix m(r, r);
        std::vector<double> b = poly.equality_rhs;
        for (std::size_t a = 0; a < r; ++a) {
            for (std::size_t i = 0; i < k; ++i) {
                if (std::find(free.begin(), free.end(), i) == free.end())
                    b[a] -= poly.equality_rows[a][i] * floor;
            }
            for (std::size_t j = 0; j < r; ++j) m(a, j) = poly.equality_rows[a][free[j]];
        }
        auto sol = linalg::solve(m, b);
        if (!sol) return;
        std::vector<double> v(k, floor);
        for (std::size_t j = 0; j < r; ++j) {
            if ((*sol)[j] < floor - 1e-12) return;
            v[free[j]] = (*sol)[j];
        }
        for (const auto& existing : poly.vertices) {
            double diff = 0.0;
            for (std::size_t i = 0; i < k; ++i) diff = std::max(diff, std::fabs(existing[i] - v[i]));
            if (diff < 1e-11) return;
        }
        poly.vertices.push_back(std::move(v));
    };
    std::vector<std::size_t> free;
    const auto recurse = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
        if (depth == r) {
            try_vertex(free);
            return;
        }
        for (std::size_t i = start; i + (r - depth - 1) < k; ++i) {
            free.push_back(i);
            self(self, i + 1, depth + 1);
            free.pop_back();
        }
    };
    recurse(recurse, 0, 0);

    if (poly.vertices.empty())
        throw no_deflator_error("empty one-step martingale polytope at node " +
                                std::to_string(node) + ": one-step arbitrage");

    poly.feasible.assign(k, 0.0);
    for (const auto& v : poly.vertices)
        for (std::size_t i = 0; i < k; ++i) poly.feasible[i] += v[i] / poly.vertices.size();

    linalg::Matrix a(r, k);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < k; ++j) a(i, j) = poly.equality_rows[i][j];
    poly.null_basis = linalg::null_space(a);
    return poly;
}

inline std::vector<MartingalePolytope> all_polytopes(const EventTree& tree,
                                                     double floor = kTransitionFloor) {
    std::vector<MartingalePolytope> polys(tree.num_nodes());
    for (std::size_t i = 0; i < tree.num_nodes(); ++i)
        if (!tree.is_terminal(static_cast<int>(i)))
            polys[i] = one_step_martingale_polytope(tree, static_cast<int>(i), floor);
    return polys;
}

// Transition assignment: one conditional measure per non-terminal node, in
// child order.
using TransitionAssignment = std::vector<std::vector<double>>;

// Deflator built from one-step martingale measures:
//   Z(root) = y,  Z(child) = Z(node) q(child) / p(child).
// Such deflators turn every self-financing wealth process into an exact
// martingale.
inline Deflator deflator_from_transitions(const EventTree& tree, const TransitionAssignment& q,
                                          double y, double floor = kTransitionFloor) {
    if (!(y > 0.0)) throw std::domain_error("deflator root value must be positive");
    if (q.size() != tree.num_nodes())
        throw std::invalid_argument("transition assignment size must match the tree");
    Deflator z;
    z.value.assign(tree.num_nodes(), 0.0);
    z.value[0] = y;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        if (n.children.empty()) continue;
        const auto poly = one_step_martingale_polytope(tree, static_cast<int>(i), floor);
        if (q[i].size() != n.children.size() || !poly.contains(q[i]))
            throw invalid_measure_error("transition measure outside martingale polytope at node " +
                                        std::to_string(i));
        for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
            const int c = n.children[ci];
            z.value[c] = z.value[i] * q[i][ci] / tree.node(c).prob;
        }
    }
    return z;
}

// Largest one-step defect of the supermartingale property of
// X Y + sum of past deflated consumption. Nonpositive (up to roundoff) iff Y
// deflates this (X, c) correctly; zero for transition-built deflators.
inline double supermartingale_residual(const EventTree& tree, const Deflator& y, double x,
                                       const Strategy& strategy, const ConsumptionPlan& plan) {
    const auto wealth = wealth_process(tree, x, strategy, plan);
    std::vector<double> cum(tree.num_nodes(), 0.0);
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        for (int c : n.children)
            cum[c] = cum[i] + plan.rate[i] * y.value[i] * tree.dt();
    }
    double residual = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        if (n.children.empty()) continue;
        double expected = 0.0;
        for (int c : n.children)
            expected += tree.node(c).prob * (wealth[c] * y.value[c] + cum[c]);
        residual = std::max(residual, expected - (wealth[i] * y.value[i] + cum[i]));
    }
    return residual;
}

// <c, Y> = E[ sum_t c_t Y_t dt ].
inline double budget_pairing(const EventTree& tree, const ConsumptionPlan& plan,
                             const Deflator& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i)
        s += tree.path_prob(static_cast<int>(i)) * plan.rate[i] * y.value[i] * tree.dt();
    return s;
}

// E[ f_t ] over the time-t slice.
inline double slice_expectation(const EventTree& tree, std::span<const double> node_values, int t) {
    double s = 0.0;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i)
        if (tree.node(static_cast<int>(i)).t == t) s += tree.path_prob(static_cast<int>(i)) * node_values[i];
    return s;
}

} // namespace duallab
