#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duallab/errors.hpp"

namespace duallab {

struct TreeNode {
    int id = 0;
    int t = 0;
    int parent = -1;
    double prob = 1.0; // conditional probability of this branch given the parent
    std::vector<double> prices;
    std::vector<int> children;
};

// Discounting clock: per-period weight kappa(t) = exp(-alpha t dt) dt and its
// reciprocal-density factor gamma(t) = exp(alpha t dt), so kappa * gamma = dt
// at every date. An infinite horizon is truncated at T; the geometric tail
// weight is recorded on the tree for reporting.
struct ClockSpec {
    double alpha = 0.0;
    double dt = 1.0;
    int horizon = 0; // largest time index T
};

// Finite event-tree market. Nodes are stored in index order with parents
// before children; node ids equal their indices. Immutable after
// construction, so all evaluations can run concurrently.
class EventTree {
  public:
    EventTree(std::vector<TreeNode> nodes, ClockSpec clock)
        : nodes_(std::move(nodes)), clock_(clock) {
        validate();
        path_prob_.assign(nodes_.size(), 1.0);
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            path_prob_[i] = path_prob_[nodes_[i].parent] * nodes_[i].prob;
        kappa_.resize(clock_.horizon + 1);
        gamma_.resize(clock_.horizon + 1);
        for (int t = 0; t <= clock_.horizon; ++t) {
            kappa_[t] = std::exp(-clock_.alpha * t * clock_.dt) * clock_.dt;
            gamma_[t] = std::exp(clock_.alpha * t * clock_.dt);
        }
    }

    std::size_t num_nodes() const { return nodes_.size(); }
    int horizon() const { return clock_.horizon; }
    double dt() const { return clock_.dt; }
    double alpha() const { return clock_.alpha; }
    const ClockSpec& clock() const { return clock_; }
    std::size_t num_assets() const { return nodes_[0].prices.size(); }

    const TreeNode& node(int i) const { return nodes_[i]; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    bool is_terminal(int i) const { return nodes_[i].children.empty(); }

    // Unconditional probability of reaching the node.
    double path_prob(int i) const { return path_prob_[i]; }

    double kappa(int t) const { return kappa_[t]; }
    double gamma(int t) const { return gamma_[t]; }

    double kappa_total() const {
        double s = 0.0;
        for (double k : kappa_) s += k;
        return s;
    }

    // Weight of the clock mass dropped by truncating the geometric clock at
    // the horizon; zero discounting (alpha = 0) leaves nothing quantifiable
    // and reports infinity.
    double clock_tail_weight() const {
        if (clock_.alpha <= 0.0) return std::numeric_limits<double>::infinity();
        const double r = std::exp(-clock_.alpha * clock_.dt);
        return clock_.dt * std::pow(r, clock_.horizon + 1) / (1.0 - r);
    }

    // Replaces the clock discount rate, e.g. when a problem block overrides
    // the rate stored in a tree file.
    EventTree with_alpha(double alpha) const {
        ClockSpec c = clock_;
        c.alpha = alpha;
        return EventTree(nodes_, c);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["clock"] = {{"alpha", clock_.alpha}, {"dt", clock_.dt}, {"T", clock_.horizon}};
        auto arr = nlohmann::ordered_json::array();
        for (const auto& n : nodes_) {
            arr.push_back({{"id", n.id},
                           {"t", n.t},
                           {"parent", n.parent},
                           {"prob", n.prob},
                           {"prices", n.prices}});
        }
        j["nodes"] = std::move(arr);
        return j;
    }

    static EventTree from_json(const nlohmann::json& j) {
        ClockSpec clock;
        clock.alpha = j.at("clock").at("alpha").get<double>();
        clock.dt = j.at("clock").at("dt").get<double>();
        clock.horizon = j.at("clock").at("T").get<int>();
        std::vector<TreeNode> nodes;
        for (const auto& nj : j.at("nodes")) {
            TreeNode n;
            n.id = nj.at("id").get<int>();
            n.t = nj.at("t").get<int>();
            n.parent = nj.at("parent").get<int>();
            n.prob = nj.at("prob").get<double>();
            n.prices = nj.at("prices").get<std::vector<double>>();
            nodes.push_back(std::move(n));
        }
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].id != static_cast<int>(i))
                throw config_error("tree nodes must be listed in id order");
            if (nodes[i].parent >= 0) nodes[nodes[i].parent].children.push_back(nodes[i].id);
        }
        return EventTree(std::move(nodes), clock);
    }

  private:
    void validate() const {
        if (nodes_.empty()) throw config_error("tree has no nodes");
        if (nodes_[0].parent != -1 || nodes_[0].t != 0)
            throw config_error("node 0 must be the root at time 0");
        const std::size_t d = nodes_[0].prices.size();
        if (d == 0) throw config_error("nodes need at least one asset price");
        int max_t = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.id != static_cast<int>(i)) throw config_error("node ids must equal indices");
            if (i > 0) {
                if (n.parent < 0 || n.parent >= static_cast<int>(i))
                    throw config_error("parents must precede children");
                if (n.t != nodes_[n.parent].t + 1)
                    throw config_error("child time must be parent time + 1");
                if (!(n.prob > 0.0)) throw config_error("branch probabilities must be positive");
            }
            if (n.prices.size() != d) throw config_error("inconsistent asset dimension");
            for (double s : n.prices)
                if (!(s > 0.0)) throw config_error("asset prices must be strictly positive");
            max_t = std::max(max_t, n.t);
        }
        if (max_t != clock_.horizon) throw config_error("clock horizon does not match node times");
        if (!(clock_.dt > 0.0)) throw config_error("dt must be positive");
        for (const auto& n : nodes_) {
            if (n.children.empty()) {
                if (n.t != clock_.horizon)
                    throw config_error("terminal nodes must sit at the horizon");
                continue;
            }
            if (n.children.size() < 2)
                throw config_error("non-terminal nodes need at least two children");
            double psum = 0.0;
            for (int c : n.children) psum += nodes_[c].prob;
            if (std::fabs(psum - 1.0) > 1e-12)
                throw config_error("branch probabilities must sum to one");
        }
    }

    std::vector<TreeNode> nodes_;
    ClockSpec clock_;
    std::vector<double> path_prob_;
    std::vector<double> kappa_, gamma_;
};

// Expands a single-asset tree with the same branch factors and probabilities
// at every node (recombining in price, expanded in nodes). The root price
// is 1.
inline EventTree build_recombining(int branching, int horizon, std::span<const double> factors,
                                   std::span<const double> probabilities, ClockSpec clock,
                                   std::size_t node_cap = 200000) {
    if (branching < 2) throw std::invalid_argument("branching must be at least 2");
    if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
    if (factors.size() != static_cast<std::size_t>(branching) ||
        probabilities.size() != static_cast<std::size_t>(branching))
        throw std::invalid_argument("need one factor and one probability per branch");
    double psum = 0.0;
    for (int b = 0; b < branching; ++b) {
        if (!(factors[b] > 0.0)) throw std::invalid_argument("price factors must be positive");
        if (!(probabilities[b] > 0.0)) throw std::invalid_argument("probabilities must be positive");
        psum += probabilities[b];
    }
    if (std::fabs(psum - 1.0) > 1e-12) throw std::invalid_argument("probabilities must sum to one");

    std::size_t count = 1, layer = 1;
    for (int t = 0; t < horizon; ++t) {
        layer *= branching;
        count += layer;
        if (count > node_cap) throw size_error("tree node cap exceeded");
    }

    clock.horizon = horizon;
    std::vector<TreeNode> nodes;
    nodes.reserve(count);
    nodes.push_back(TreeNode{0, 0, -1, 1.0, {1.0}, {}});
    std::size_t level_begin = 0, level_end = 1;
    for (int t = 0; t < horizon; ++t) {
        const std::size_t next_begin = nodes.size();
        for (std::size_t i = level_begin; i < level_end; ++i) {
            for (int b = 0; b < branching; ++b) {
                TreeNode child;
                child.id = static_cast<int>(nodes.size());
                child.t = t + 1;
                child.parent = static_cast<int>(i);
                child.prob = probabilities[b];
                child.prices = {nodes[i].prices[0] * factors[b]};
                nodes[i].children.push_back(child.id);
                nodes.push_back(std::move(child));
            }
        }
        level_begin = next_begin;
        level_end = nodes.size();
    }
    return EventTree(std::move(nodes), clock);
}

} // namespace duallab
