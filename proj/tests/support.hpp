#pragma once

// Shared fixtures and randomized instance generators for the test suites.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "duallab/event_tree.hpp"
#include "duallab/tree_ops.hpp"

namespace testsupport {

// One-period binomial with moves 2.0 / 0.5 on even odds, undiscounted unit
// periods. The unique one-step martingale measure is (1/3, 2/3).
inline duallab::EventTree binomial_fixture(int horizon = 1) {
    const std::array<double, 2> factors{2.0, 0.5};
    const std::array<double, 2> probs{0.5, 0.5};
    return duallab::build_recombining(2, horizon, factors, probs, {0.0, 1.0, horizon});
}

inline duallab::EventTree trinomial_fixture(int horizon = 1) {
    const std::array<double, 3> factors{1.5, 1.0, 0.5};
    const std::array<double, 3> probs{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    return duallab::build_recombining(3, horizon, factors, probs, {0.0, 1.0, horizon});
}

// Single node at time zero: everything must be consumed immediately.
inline duallab::EventTree single_node_tree() {
    std::vector<duallab::TreeNode> nodes;
    nodes.push_back({0, 0, -1, 1.0, {1.0}, {}});
    return duallab::EventTree(std::move(nodes), {0.0, 1.0, 0});
}

// Random single-asset tree with per-node branching and price moves. Factors
// straddle 1 with a margin so every one-step martingale polytope is
// comfortably non-empty.
inline duallab::EventTree random_tree(std::uint64_t seed, int max_periods = 3,
                                      int max_branch = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int horizon = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_periods));
    duallab::ClockSpec clock;
    clock.dt = 1.0;
    clock.alpha = 0.3 * unit(rng);
    clock.horizon = horizon;

    std::vector<duallab::TreeNode> nodes;
    nodes.push_back({0, 0, -1, 1.0, {1.0}, {}});
    std::vector<int> level{0};
    for (int t = 0; t < horizon; ++t) {
        std::vector<int> next;
        for (int parent : level) {
            const int k = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_branch - 1));
            std::vector<double> factors(k);
            factors[0] = 0.55 + 0.35 * unit(rng);   // in [0.55, 0.90]
            factors[k - 1] = 1.10 + 0.55 * unit(rng); // in [1.10, 1.65]
            for (int b = 1; b + 1 < k; ++b) factors[b] = 0.92 + 0.16 * unit(rng);
            std::vector<double> probs(k);
            double psum = 0.0;
            for (int b = 0; b < k; ++b) {
                probs[b] = 0.15 + 0.7 * unit(rng);
                psum += probs[b];
            }
            double acc = 0.0;
            for (int b = 0; b < k; ++b) {
                // Renormalize with an exact final term so the sum is 1.0.
                probs[b] = (b + 1 == k) ? 1.0 - acc : probs[b] / psum;
                acc += probs[b];
            }
            for (int b = 0; b < k; ++b) {
                duallab::TreeNode child;
                child.id = static_cast<int>(nodes.size());
                child.t = t + 1;
                child.parent = parent;
                child.prob = probs[b];
                child.prices = {nodes[parent].prices[0] * factors[b]};
                nodes[parent].children.push_back(child.id);
                next.push_back(child.id);
                nodes.push_back(std::move(child));
            }
        }
        level = std::move(next);
    }
    return duallab::EventTree(std::move(nodes), clock);
}

struct RandomPlan {
    duallab::ConsumptionPlan plan;
    duallab::Strategy strategy;
};

// Admissible-by-construction plan: consume a fraction of current wealth and
// trade a sub-unit fraction of what remains, so wealth stays positive on
// every branch.
inline RandomPlan random_admissible(const duallab::EventTree& tree, double x,
                                    std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomPlan out;
    out.plan = duallab::ConsumptionPlan::zero(tree);
    out.strategy = duallab::Strategy::zero(tree);

    std::vector<double> wealth(tree.num_nodes(), 0.0);
    wealth[0] = x;
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        if (n.children.empty()) {
            out.plan.rate[i] = unit(rng) * wealth[i] / tree.dt();
            continue;
        }
        const double consume_frac = 0.05 + 0.55 * unit(rng);
        out.plan.rate[i] = consume_frac * wealth[i] / tree.dt();
        const double remaining = wealth[i] - out.plan.rate[i] * tree.dt();
        double max_move = 0.0;
        for (int c : n.children)
            max_move = std::max(max_move, std::fabs(tree.node(c).prices[0] - n.prices[0]));
        const double h = (max_move > 0.0) ? (2.0 * unit(rng) - 1.0) * 0.9 * remaining / max_move : 0.0;
        out.strategy.units[i][0] = h;
        for (int c : n.children)
            wealth[c] = remaining + h * (tree.node(c).prices[0] - n.prices[0]);
    }
    return out;
}

// Random point of each node's martingale polytope (convex combination of its
// vertices).
inline duallab::TransitionAssignment random_transitions(const duallab::EventTree& tree,
                                                        std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    duallab::TransitionAssignment q(tree.num_nodes());
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        if (tree.is_terminal(static_cast<int>(i))) continue;
        const auto poly = duallab::one_step_martingale_polytope(tree, static_cast<int>(i));
        std::vector<double> weights(poly.vertices.size());
        double wsum = 0.0;
        for (auto& w : weights) {
            w = 0.05 + unit(rng);
            wsum += w;
        }
        q[i].assign(poly.feasible.size(), 0.0);
        for (std::size_t v = 0; v < poly.vertices.size(); ++v)
            for (std::size_t ci = 0; ci < q[i].size(); ++ci)
                q[i][ci] += (weights[v] / wsum) * poly.vertices[v][ci];
    }
    return q;
}

} // namespace testsupport
