#pragma once

// Independent test-side oracles. These deliberately avoid the library's
// solver code paths: brute-force grids, exhaustive enumeration, and a
// homothetic dynamic program that only applies to log/power utilities.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "duallab/event_tree.hpp"
#include "duallab/tree_ops.hpp"
#include "duallab/utility.hpp"

namespace oracles {

inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         double tol = 1e-12) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > tol * (1.0 + std::fabs(lo) + std::fabs(hi))) {
        if (fc > fd) {
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

// Dual objective of a transition assignment, recomputed from first
// principles (path products, no Deflator machinery).
inline double dual_objective_raw(const duallab::EventTree& tree, const duallab::Utility& u,
                                 double y, const duallab::TransitionAssignment& q) {
    std::vector<double> z(tree.num_nodes(), 1.0);
    double value = 0.0;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
            const int c = n.children[ci];
            z[c] = z[i] * q[i][ci] / tree.node(c).prob;
        }
        value += tree.kappa(n.t) * tree.path_prob(static_cast<int>(i)) *
                 u.conjugate(tree.gamma(n.t) * y * z[i]);
    }
    return value;
}

// Exhaustive dual oracle for trees whose polytopes have at most one degree
// of freedom: scans a dense grid of the free coordinate per free node
// (coupled grid, intended for a single free node).
inline double dual_grid_oracle_1d(const duallab::EventTree& tree, const duallab::Utility& u,
                                  double y, int free_node, std::size_t grid_points = 100000) {
    const auto poly = duallab::one_step_martingale_polytope(tree, free_node);
    if (poly.null_basis.size() != 1)
        throw std::logic_error("dual_grid_oracle_1d expects exactly one degree of freedom");
    duallab::TransitionAssignment q(tree.num_nodes());
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        if (tree.is_terminal(static_cast<int>(i))) continue;
        q[i] = duallab::one_step_martingale_polytope(tree, static_cast<int>(i)).feasible;
    }
    // Range of the free coordinate keeping q >= floor.
    const auto& dir = poly.null_basis[0];
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dir.size(); ++i) {
        if (dir[i] > 1e-14)
            lo = std::max(lo, (poly.floor - poly.feasible[i]) / dir[i]);
        else if (dir[i] < -1e-14)
            hi = std::min(hi, (poly.floor - poly.feasible[i]) / dir[i]);
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g <= grid_points; ++g) {
        const double s = lo + (hi - lo) * static_cast<double>(g) / grid_points;
        auto qq = q;
        for (std::size_t i = 0; i < dir.size(); ++i)
            qq[free_node][i] = poly.feasible[i] + s * dir[i];
        best = std::min(best, dual_objective_raw(tree, u, y, qq));
    }
    return best;
}

// All adapted stopping boundaries of the subtree rooted at `node`: each
// boundary is an antichain of node ids where the process stops with
// certainty.
inline std::vector<std::vector<int>> stop_boundaries(const duallab::EventTree& tree, int node) {
    std::vector<std::vector<int>> out;
    out.push_back({node}); // stop here
    const auto& n = tree.node(node);
    if (n.children.empty()) return out;
    std::vector<std::vector<std::vector<int>>> per_child;
    for (int c : n.children) per_child.push_back(stop_boundaries(tree, c));
    std::vector<std::vector<int>> combos{{}};
    for (const auto& options : per_child) {
        std::vector<std::vector<int>> next;
        for (const auto& prefix : combos)
            for (const auto& choice : options) {
                auto merged = prefix;
                merged.insert(merged.end(), choice.begin(), choice.end());
                next.push_back(std::move(merged));
            }
        combos = std::move(next);
    }
    for (auto& c : combos) out.push_back(std::move(c));
    return out;
}

// Exhaustive superhedging oracle: max over all stopping boundaries and all
// per-node vertex assignments of the stopped expectation of the target under
// the vertex measure. Intended for trees with <= 3 periods and <= 3 branches.
inline double superhedge_oracle(const duallab::EventTree& tree,
                                const std::vector<double>& target) {
    std::vector<std::vector<std::vector<double>>> vertex_sets(tree.num_nodes());
    for (std::size_t i = 0; i < tree.num_nodes(); ++i)
        if (!tree.is_terminal(static_cast<int>(i)))
            vertex_sets[i] =
                duallab::one_step_martingale_polytope(tree, static_cast<int>(i), 0.0).vertices;

    const auto boundaries = stop_boundaries(tree, 0);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& boundary : boundaries) {
        std::vector<bool> stops(tree.num_nodes(), false);
        for (int b : boundary) stops[b] = true;
        // Interior nodes: reachable from the root without hitting the boundary.
        std::vector<int> interior;
        {
            std::vector<int> stack{0};
            while (!stack.empty()) {
                const int v = stack.back();
                stack.pop_back();
                if (stops[v]) continue;
                interior.push_back(v);
                for (int c : tree.node(v).children) stack.push_back(c);
            }
        }
        std::vector<std::size_t> choice(tree.num_nodes(), 0);
        const std::function<void(std::size_t)> enumerate = [&](std::size_t idx) {
            if (idx == interior.size()) {
                // Walk every root-to-boundary path and accumulate the stopped value.
                double value = 0.0;
                const std::function<void(int, double)> walk = [&](int v, double qmass) {
                    if (stops[v]) {
                        value += qmass * target[v];
                        return;
                    }
                    const auto& q = vertex_sets[v][choice[v]];
                    const auto& children = tree.node(v).children;
                    for (std::size_t ci = 0; ci < children.size(); ++ci)
                        walk(children[ci], qmass * q[ci]);
                };
                walk(0, 1.0);
                best = std::max(best, value);
                return;
            }
            const int v = interior[idx];
            for (std::size_t k = 0; k < vertex_sets[v].size(); ++k) {
                choice[v] = k;
                enumerate(idx + 1);
            }
        };
        enumerate(0);
    }
    return best;
}

// Homothetic dynamic program for log utility on single-asset trees:
// J_n(w) = a_n log w + b_n, optimizing per node over the consumed fraction
// and the traded fraction of post-consumption wealth.
inline double dp_value_log(const duallab::EventTree& tree, double x) {
    const std::size_t n_nodes = tree.num_nodes();
    std::vector<double> a(n_nodes, 0.0), b(n_nodes, 0.0);
    const double dt = tree.dt();
    for (std::size_t idx = n_nodes; idx-- > 0;) {
        const auto& n = tree.node(static_cast<int>(idx));
        const double kap = tree.kappa(n.t);
        if (n.children.empty()) {
            a[idx] = kap;
            b[idx] = -kap * std::log(dt);
            continue;
        }
        const std::size_t k = n.children.size();
        std::vector<double> f(k), p(k), ac(k), bc(k);
        for (std::size_t ci = 0; ci < k; ++ci) {
            const int c = n.children[ci];
            f[ci] = tree.node(c).prices[0] / n.prices[0];
            p[ci] = tree.node(c).prob;
            ac[ci] = a[c];
            bc[ci] = b[c];
        }
        a[idx] = kap;
        for (std::size_t ci = 0; ci < k; ++ci) a[idx] += p[ci] * ac[ci];

        const auto inner = [&](double theta) {
            double lo = -std::numeric_limits<double>::infinity();
            double hi = std::numeric_limits<double>::infinity();
            for (std::size_t ci = 0; ci < k; ++ci) {
                const double slope = f[ci] - 1.0;
                if (slope > 1e-14)
                    lo = std::max(lo, -(1.0 - theta) / slope);
                else if (slope < -1e-14)
                    hi = std::min(hi, -(1.0 - theta) / slope);
            }
            const double pad = 1e-9 * (hi - lo);
            const auto g = [&](double eta) {
                double s = kap * (std::log(theta) - std::log(dt));
                for (std::size_t ci = 0; ci < k; ++ci) {
                    const double growth = 1.0 - theta + eta * (f[ci] - 1.0);
                    if (!(growth > 0.0)) return -std::numeric_limits<double>::infinity();
                    s += p[ci] * ac[ci] * std::log(growth);
                }
                return s;
            };
            const double eta = golden_max(g, lo + pad, hi - pad, 1e-12);
            return g(eta);
        };
        const double theta = golden_max(inner, 1e-10, 1.0 - 1e-10, 1e-12);
        double bsum = inner(theta);
        for (std::size_t ci = 0; ci < k; ++ci) bsum += p[ci] * bc[ci];
        b[idx] = bsum;
    }
    return a[0] * std::log(x) + b[0];
}

// Same dynamic program for power utility: J_n(w) = a_n w^p / p.
inline double dp_value_power(const duallab::EventTree& tree, double p_exp, double x) {
    const std::size_t n_nodes = tree.num_nodes();
    std::vector<double> a(n_nodes, 0.0);
    const double dt = tree.dt();
    for (std::size_t idx = n_nodes; idx-- > 0;) {
        const auto& n = tree.node(static_cast<int>(idx));
        const double kap = tree.kappa(n.t);
        if (n.children.empty()) {
            a[idx] = kap * std::pow(dt, -p_exp);
            continue;
        }
        const std::size_t k = n.children.size();
        std::vector<double> f(k), pr(k), ac(k);
        for (std::size_t ci = 0; ci < k; ++ci) {
            const int c = n.children[ci];
            f[ci] = tree.node(c).prices[0] / n.prices[0];
            pr[ci] = tree.node(c).prob;
            ac[ci] = a[c];
        }
        // phi(theta, eta) with J = (w^p / p) phi; maximize J, which flips to
        // minimizing phi when p < 0.
        const double sign = (p_exp > 0.0) ? 1.0 : -1.0;
        const auto inner = [&](double theta) {
            double lo = -std::numeric_limits<double>::infinity();
            double hi = std::numeric_limits<double>::infinity();
            for (std::size_t ci = 0; ci < k; ++ci) {
                const double slope = f[ci] - 1.0;
                if (slope > 1e-14)
                    lo = std::max(lo, -(1.0 - theta) / slope);
                else if (slope < -1e-14)
                    hi = std::min(hi, -(1.0 - theta) / slope);
            }
            const double pad = 1e-9 * (hi - lo);
            const auto g = [&](double eta) {
                double phi = kap * std::pow(theta / dt, p_exp);
                for (std::size_t ci = 0; ci < k; ++ci) {
                    const double growth = 1.0 - theta + eta * (f[ci] - 1.0);
                    if (!(growth > 0.0)) return -std::numeric_limits<double>::infinity();
                    phi += pr[ci] * ac[ci] * std::pow(growth, p_exp);
                }
                return sign * phi;
            };
            const double eta = golden_max(g, lo + pad, hi - pad, 1e-12);
            return g(eta);
        };
        const double theta = golden_max(inner, 1e-10, 1.0 - 1e-10, 1e-12);
        a[idx] = sign * inner(theta);
    }
    return a[0] * std::pow(x, p_exp) / p_exp;
}

} // namespace oracles
