#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duallab/bessel.hpp"
#include "duallab/duality.hpp"
#include "duallab/event_tree.hpp"
#include "duallab/report.hpp"
#include "duallab/rng.hpp"
#include "duallab/superhedge.hpp"
#include "duallab/utility.hpp"

namespace duallab {

// One batch run of the lab: a command, its inputs, an output directory, and
// tolerance overrides. The CLI builds this from flags; sweeps build it from
// a base JSON file plus one overridden axis value per cell.
struct ExperimentConfig {
    std::string command;                        // tree-duality | superhedge | bessel | conjugate | sweep
    std::string tree_path;
    std::string claim = "put:1.0";
    std::string utility = "log";                // log | power | table:PATH
    double p = 0.5;
    double x = 1.0;
    std::optional<double> alpha_override;
    std::string sde_config_path;
    std::string grid_spec = "1e-3:1e3:41";
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 42;
    std::map<std::string, double> tolerances;
    std::map<std::string, double> overrides;    // sweep axis lands here
    std::string base_path;                      // sweep
    std::string axis;                           // sweep, "name=v1,v2,..."

    double tol(const std::string& name, double fallback) const {
        const auto it = tolerances.find(name);
        return it == tolerances.end() ? fallback : it->second;
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        c.command = j.value("command", "");
        c.tree_path = j.value("tree", "");
        c.claim = j.value("claim", c.claim);
        c.utility = j.value("utility", c.utility);
        c.p = j.value("p", c.p);
        c.x = j.value("x", c.x);
        if (j.contains("alpha")) c.alpha_override = j.at("alpha").get<double>();
        c.sde_config_path = j.value("config", "");
        c.grid_spec = j.value("grid", c.grid_spec);
        c.out_dir = j.value("out", std::string("."));
        c.seed = j.value("seed", c.seed);
        if (j.contains("tolerances"))
            for (const auto& [k, v] : j.at("tolerances").items())
                c.tolerances[k] = v.get<double>();
        return c;
    }

    nlohmann::ordered_json params_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        if (!tree_path.empty()) j["tree"] = tree_path;
        if (command == "superhedge") j["claim"] = claim;
        if (command == "tree-duality" || command == "conjugate") {
            j["utility"] = utility;
            if (utility == "power") j["p"] = p;
        }
        if (command == "tree-duality") j["x"] = x;
        if (alpha_override) j["alpha"] = *alpha_override;
        if (!sde_config_path.empty()) j["config"] = sde_config_path;
        if (command == "conjugate") j["grid"] = grid_spec;
        j["seed"] = seed;
        for (const auto& [k, v] : overrides) j["override_" + k] = v;
        return j;
    }
};

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("cannot parse " + path + ": " + e.what());
    }
    return j;
}

inline Utility make_utility(const ExperimentConfig& cfg) {
    if (cfg.utility == "log") return Utility::make_log();
    if (cfg.utility == "power") return Utility::make_power(cfg.p);
    if (cfg.utility.rfind("table:", 0) == 0)
        return Utility::from_table_file(cfg.utility.substr(6));
    throw config_error("unknown utility spec: " + cfg.utility);
}

// Grid specification "lo:hi:count" (log-spaced) or "lo:hi:count:lin".
inline std::vector<double> parse_grid(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() < 3 || parts.size() > 4) throw config_error("bad grid spec: " + spec);
    const double lo = std::stod(parts[0]);
    const double hi = std::stod(parts[1]);
    const int count = std::stoi(parts[2]);
    const bool linear = parts.size() == 4 && parts[3] == "lin";
    if (count < 2 || !(hi > lo) || (!linear && !(lo > 0.0)))
        throw config_error("bad grid spec: " + spec);
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i) {
        const double w = static_cast<double>(i) / (count - 1);
        g[i] = linear ? lo + w * (hi - lo) : std::exp(std::log(lo) + w * (std::log(hi) - std::log(lo)));
    }
    return g;
}

inline SdeConfig parse_sde_config(const nlohmann::json& j) {
    SdeConfig cfg;
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.x = j.value("x", cfg.x);
    cfg.p = j.value("p", cfg.p);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.dt = j.value("dt", cfg.dt);
    cfg.n_paths = j.value("n_paths", cfg.n_paths);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.n_workers = j.value("n_workers", cfg.n_workers);
    if (j.contains("psi")) {
        const auto& pj = j.at("psi");
        const std::string kind = pj.value("kind", "zero");
        if (kind == "zero") {
            cfg.psi.kind = PsiSpec::Kind::Zero;
        } else if (kind == "constant") {
            cfg.psi.kind = PsiSpec::Kind::Constant;
            cfg.psi.value = pj.value("value", 0.0);
        } else if (kind == "tabulated") {
            cfg.psi.kind = PsiSpec::Kind::Tabulated;
            cfg.psi.times = pj.at("times").get<std::vector<double>>();
            cfg.psi.values = pj.at("values").get<std::vector<double>>();
        } else {
            throw config_error("unknown psi kind: " + kind);
        }
    }
    if (j.contains("vol")) {
        const auto& vj = j.at("vol");
        const std::string kind = vj.value("kind", "constant");
        if (kind == "constant") {
            cfg.vol.kind = VolModel::Kind::Constant;
            cfg.vol.value = vj.value("value", 1.0);
        } else if (kind == "tabulated") {
            cfg.vol.kind = VolModel::Kind::Tabulated;
            cfg.vol.times = vj.at("times").get<std::vector<double>>();
            cfg.vol.values = vj.at("values").get<std::vector<double>>();
        } else {
            throw config_error("unknown vol kind: " + kind);
        }
    }
    return cfg;
}

inline std::vector<double> parse_claim(const EventTree& tree, const std::string& claim) {
    std::vector<double> b(tree.num_nodes(), 0.0);
    const auto payoff = [&](auto&& f) {
        for (std::size_t i = 0; i < tree.num_nodes(); ++i)
            if (tree.is_terminal(static_cast<int>(i)))
                b[i] = f(tree.node(static_cast<int>(i)).prices[0]);
    };
    if (claim == "zero") return b;
    if (claim.rfind("put:", 0) == 0) {
        const double k = std::stod(claim.substr(4));
        payoff([k](double s) { return std::max(k - s, 0.0); });
        return b;
    }
    if (claim.rfind("call:", 0) == 0) {
        const double k = std::stod(claim.substr(5));
        payoff([k](double s) { return std::max(s - k, 0.0); });
        return b;
    }
    if (claim.rfind("file:", 0) == 0) {
        const auto j = load_json_file(claim.substr(5));
        const auto values = j.at("values").get<std::vector<double>>();
        if (values.size() != tree.num_nodes())
            throw config_error("claim value count does not match the tree");
        return values;
    }
    if (claim.rfind("cumcons:", 0) == 0) {
        const auto j = load_json_file(claim.substr(8));
        const auto rate = j.at("rate").get<std::vector<double>>();
        if (rate.size() != tree.num_nodes())
            throw config_error("plan size does not match the tree");
        // Cumulative consumption; terminal nodes include their own draw.
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            for (int c : n.children) b[c] = b[i] + rate[i] * tree.dt();
        }
        for (std::size_t i = 0; i < tree.num_nodes(); ++i)
            if (tree.is_terminal(static_cast<int>(i))) b[i] += rate[i] * tree.dt();
        return b;
    }
    throw config_error("unknown claim spec: " + claim);
}

inline EventTree load_tree(const ExperimentConfig& cfg) {
    if (cfg.tree_path.empty()) throw config_error("missing --tree input");
    EventTree tree = EventTree::from_json(load_json_file(cfg.tree_path));
    double alpha = tree.alpha();
    if (cfg.alpha_override) alpha = *cfg.alpha_override;
    if (const auto it = cfg.overrides.find("alpha"); it != cfg.overrides.end()) alpha = it->second;
    if (alpha != tree.alpha()) tree = tree.with_alpha(alpha);
    return tree;
}

} // namespace detail

inline RunSummary run_tree_duality(ExperimentConfig cfg) {
    if (const auto it = cfg.overrides.find("x"); it != cfg.overrides.end()) cfg.x = it->second;
    if (const auto it = cfg.overrides.find("p"); it != cfg.overrides.end()) cfg.p = it->second;
    const EventTree tree = detail::load_tree(cfg);
    const Utility u = detail::make_utility(cfg);

    const DualityReport rep = duality_report(tree, u, cfg.x);

    RunSummary s;
    s.command = "tree-duality";
    s.params = cfg.params_json();
    s.checks.push_back(Check::at_most("conjugacy_gap_abs", std::fabs(rep.conjugacy_gap),
                                      cfg.tol("conjugacy_gap", 1e-7)));
    s.checks.push_back(
        Check::at_most("pdc_max_residual", rep.pdc_max_residual, cfg.tol("pdc_residual", 1e-9)));
    s.checks.push_back(
        Check::at_most("budget_residual", rep.budget_residual, cfg.tol("budget_residual", 1e-10)));
    s.checks.push_back(Check::at_most("martingale_max_residual", rep.martingale_max_residual,
                                      cfg.tol("martingale_residual", 1e-10)));
    s.checks.push_back(Check::at_most("terminal_deflated_wealth_max",
                                      rep.terminal_deflated_wealth_max,
                                      cfg.tol("terminal_deflated_wealth", 1e-10)));
    s.checks.push_back(Check::at_most("dual_stationarity", rep.dual_stationarity,
                                      cfg.tol("dual_stationarity", 1e-9)));
    double min_decrement = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < rep.deflated_wealth_by_time.size(); ++t) {
        const double next =
            (t + 1 < rep.deflated_wealth_by_time.size()) ? rep.deflated_wealth_by_time[t + 1] : 0.0;
        min_decrement = std::min(min_decrement, rep.deflated_wealth_by_time[t] - next);
    }
    s.checks.push_back(
        Check::at_least("potential_min_decrement", min_decrement, cfg.tol("potential_decrement", 0.0)));

    s.key_figures = {{"x", rep.x},
                     {"y_star", rep.y_star},
                     {"u_of_x", rep.u_of_x},
                     {"v_of_y", rep.v_of_y},
                     {"conjugacy_gap", rep.conjugacy_gap}};

    CsvTable results({"x", "y_star", "u_of_x", "v_of_y", "conjugacy_gap", "pdc_max_residual",
                      "budget_residual", "martingale_max_residual",
                      "terminal_deflated_wealth_max", "dual_stationarity", "dual_iterations"});
    results.add_numeric_row({rep.x, rep.y_star, rep.u_of_x, rep.v_of_y, rep.conjugacy_gap,
                             rep.pdc_max_residual, rep.budget_residual,
                             rep.martingale_max_residual, rep.terminal_deflated_wealth_max,
                             rep.dual_stationarity, static_cast<double>(rep.dual_iterations)});
    results.write(cfg.out_dir / "results.csv");
    s.artifacts.push_back("results.csv");

    nlohmann::ordered_json rj;
    rj["x"] = rep.x;
    rj["y_star"] = rep.y_star;
    rj["u_of_x"] = rep.u_of_x;
    rj["u_source"] = rep.u_source;
    rj["v_of_y"] = rep.v_of_y;
    rj["conjugacy_gap"] = rep.conjugacy_gap;
    rj["pdc_max_residual"] = rep.pdc_max_residual;
    rj["budget_residual"] = rep.budget_residual;
    rj["martingale_max_residual"] = rep.martingale_max_residual;
    rj["terminal_deflated_wealth_max"] = rep.terminal_deflated_wealth_max;
    rj["derivative_identity_residual_primal"] = rep.derivative_identity_residual_primal;
    rj["derivative_identity_residual_dual"] = rep.derivative_identity_residual_dual;
    rj["deflated_wealth_by_time"] = rep.deflated_wealth_by_time;
    rj["clock_mass"] = tree.kappa_total();
    if (std::isfinite(rep.clock_tail_weight)) rj["clock_tail_weight"] = rep.clock_tail_weight;
    rj["dual_stationarity"] = rep.dual_stationarity;
    rj["dual_iterations"] = rep.dual_iterations;
    write_json_file(cfg.out_dir / "report.json", rj);
    s.artifacts.push_back("report.json");
    return s;
}

inline RunSummary run_superhedge(const ExperimentConfig& cfg) {
    const EventTree tree = detail::load_tree(cfg);
    const auto target = detail::parse_claim(tree, cfg.claim);
    const auto w = smallest_dominating(tree, target);
    const auto dec = optional_decomposition(tree, w);

    double domination_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.size(); ++i) domination_min = std::min(domination_min, w[i] - target[i]);

    double reproduce_max = 0.0;
    double a_min_increment = std::numeric_limits<double>::infinity();
    {
        std::vector<double> gains(tree.num_nodes(), 0.0);
        for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
            const auto& n = tree.node(static_cast<int>(i));
            for (int c : n.children) {
                double g = 0.0;
                for (std::size_t a = 0; a < tree.num_assets(); ++a)
                    g += dec.phi[i][a] * (tree.node(c).prices[a] - n.prices[a]);
                gains[c] = gains[i] + g;
                a_min_increment = std::min(a_min_increment, dec.a[c] - dec.a[i]);
            }
        }
        for (std::size_t i = 0; i < tree.num_nodes(); ++i)
            reproduce_max = std::max(reproduce_max, std::fabs(dec.w0 + gains[i] - dec.a[i] - w[i]));
        if (tree.num_nodes() == 1) a_min_increment = 0.0;
    }

    RunSummary s;
    s.command = "superhedge";
    s.params = cfg.params_json();
    s.checks.push_back(
        Check::at_least("domination_min", domination_min, -cfg.tol("domination", 1e-12)));
    s.checks.push_back(Check::at_most("decomposition_max_error", reproduce_max,
                                      cfg.tol("decomposition_residual", 1e-10)));
    s.checks.push_back(
        Check::at_least("a_min_increment", a_min_increment, -cfg.tol("a_increment", 1e-10)));
    s.key_figures = {{"w0", dec.w0}, {"domination_min", domination_min}};

    CsvTable results({"w0", "domination_min", "decomposition_max_error", "a_min_increment"});
    results.add_numeric_row({dec.w0, domination_min, reproduce_max, a_min_increment});
    results.write(cfg.out_dir / "results.csv");
    s.artifacts.push_back("results.csv");

    CsvTable nodes({"id", "t", "price", "target", "w", "a", "phi"});
    for (std::size_t i = 0; i < tree.num_nodes(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        nodes.add_numeric_row({static_cast<double>(n.id), static_cast<double>(n.t), n.prices[0],
                               target[i], w[i], dec.a[i],
                               tree.is_terminal(n.id) ? 0.0 : dec.phi[i][0]});
    }
    nodes.write(cfg.out_dir / "nodes.csv");
    s.artifacts.push_back("nodes.csv");
    return s;
}

inline RunSummary run_bessel(const ExperimentConfig& cfg) {
    if (cfg.sde_config_path.empty()) throw config_error("missing --config input");
    SdeConfig sde = detail::parse_sde_config(detail::load_json_file(cfg.sde_config_path));
    for (const auto& [key, value] : cfg.overrides) {
        if (key == "alpha") sde.alpha = value;
        else if (key == "x") sde.x = value;
        else if (key == "p") sde.p = value;
        else if (key == "horizon") sde.horizon = value;
        else if (key == "dt") sde.dt = value;
        else if (key == "n_paths") sde.n_paths = static_cast<std::int64_t>(value);
        else if (key == "seed") sde.seed = static_cast<std::uint64_t>(value);
        else throw config_error("unknown override: " + key);
    }
    sde.validate();

    RunSummary s;
    s.command = "bessel";
    s.params = cfg.params_json();
    s.params["alpha"] = sde.alpha;
    s.params["x"] = sde.x;
    s.params["p"] = sde.p;
    s.params["dt"] = sde.dt;
    s.params["horizon"] = sde.horizon;
    s.params["n_paths"] = sde.n_paths;
    s.params["sde_seed"] = sde.seed;

    PathBatch batch = simulate_bessel(sde);
    minimal_deflator(batch);

    // Deflator mean with confidence band along the whole grid.
    CsvTable z0_stats({"time", "mean", "ci_lo", "ci_hi", "target"});
    for (int k = 0; k <= batch.n_steps; ++k) {
        const auto d = expectation_deficit(batch, batch.time[k]);
        z0_stats.add_numeric_row({batch.time[k], d.mean, d.ci_lo, d.ci_hi, 1.0});
    }
    z0_stats.write(cfg.out_dir / "z0_stats.csv");
    s.artifacts.push_back("z0_stats.csv");

    const auto quarter_times = [&] {
        std::vector<double> ts;
        for (int qq = 1; qq <= 4; ++qq)
            ts.push_back(batch.time[batch.n_steps * qq / 4]);
        return ts;
    }();

    if (sde.horizon >= 1.0 - 1e-9) {
        const auto d1 = expectation_deficit(batch, batch.time[batch.grid_index(1.0)]);
        s.checks.push_back(
            Check::at_most("z0_ci_upper_at_1", d1.ci_hi, cfg.tol("z0_ci_upper", 0.75)));
        s.key_figures.emplace_back("z0_mean_at_1", d1.mean);
        s.key_figures.emplace_back("z0_deficit_at_1", d1.deficit);
    }
    {
        double min_decrement = std::numeric_limits<double>::infinity();
        double prev = 1.0;
        for (double t : quarter_times) {
            const auto d = expectation_deficit(batch, t);
            min_decrement = std::min(min_decrement, prev - d.mean);
            prev = d.mean;
        }
        s.checks.push_back(Check::at_least("z0_mean_min_decrement", min_decrement,
                                           cfg.tol("z0_decrement", 0.0)));
    }

    if (sde.p == 0.0) {
        log_optimal_policy(sde, batch);

        double policy_gap = 0.0, decay_gap = 0.0;
        for (std::size_t i = 0; i < batch.consumption.size(); ++i)
            policy_gap = std::max(policy_gap,
                                  std::fabs(batch.consumption[i] - sde.alpha * batch.wealth[i]));
        for (std::int64_t path = 0; path < batch.n_paths; ++path)
            for (int k = 0; k <= batch.n_steps; ++k) {
                const std::size_t i = batch.idx(path, k);
                decay_gap = std::max(decay_gap,
                                     std::fabs(batch.wealth[i] * batch.deflator[i] -
                                               sde.x * std::exp(-sde.alpha * batch.time[k])));
            }
        const double mhat_residual = pathwise_invariant_check(batch);
        const auto split = log_budget_identity(batch);

        s.checks.push_back(
            Check::at_most("policy_identity_max", policy_gap, cfg.tol("policy_identity", 1e-12)));
        s.checks.push_back(Check::at_most("deflated_wealth_identity_max", decay_gap,
                                          cfg.tol("deflated_wealth_identity", 1e-12)));
        s.checks.push_back(
            Check::at_most("mhat_max_residual", mhat_residual, cfg.tol("mhat_residual", 1e-6)));
        s.checks.push_back(Check::at_most("budget_total_gap", std::fabs(split.total - sde.x),
                                          cfg.tol("budget_identity", 1e-6)));

        const std::vector<double> inner(quarter_times.begin(), quarter_times.end() - 1);
        double z_max = 0.0;
        for (double z : martingale_increment_test(batch, "M", inner, sde.alpha * sde.x * sde.dt))
            z_max = std::max(z_max, std::fabs(z));
        s.checks.push_back(Check::at_most("mhat_increment_z_max", z_max, cfg.tol("mhat_z", 3.0)));
        const auto z_last = martingale_increment_test(
            batch, "Z0", std::vector<double>{quarter_times.back()});
        s.checks.push_back(
            Check::at_most("z0_increment_z_at_horizon", z_last[0], cfg.tol("z0_z", -3.0)));

        CsvTable pot({"time", "mean", "ci_lo", "ci_hi", "target"});
        std::vector<double> pot_times{0.0};
        pot_times.insert(pot_times.end(), quarter_times.begin(), quarter_times.end());
        for (const auto& row : potential_decay(batch, pot_times))
            pot.add_numeric_row({row.t, row.mean, row.mean, row.mean, row.target});
        pot.write(cfg.out_dir / "potential.csv");
        s.artifacts.push_back("potential.csv");

        s.key_figures.emplace_back("mhat_max_residual", mhat_residual);
        s.key_figures.emplace_back("budget_total", split.total);
        s.key_figures.emplace_back("potential_target_at_horizon",
                                   sde.x * std::exp(-sde.alpha * sde.horizon));
    } else {
        const std::vector<double> psi_grid{0.0, 0.25, 0.5};
        const auto rows = power_dual_scan(sde, psi_grid, 1.0);
        CsvTable scan({"psi", "value", "ci_lo", "ci_hi"});
        for (const auto& r : rows) scan.add_numeric_row({r.psi, r.value, r.ci_lo, r.ci_hi});
        scan.write(cfg.out_dir / "psi_scan.csv");
        s.artifacts.push_back("psi_scan.csv");

        double worst_margin = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 1; j < rows.size(); ++j) {
            const double joint = std::sqrt(rows[0].half_width * rows[0].half_width +
                                           rows[j].half_width * rows[j].half_width);
            worst_margin = std::max(worst_margin, rows[0].value - rows[j].value - joint);
        }
        s.checks.push_back(
            Check::at_most("psi_zero_minimizes_margin", worst_margin, cfg.tol("psi_margin", 0.0)));
        s.key_figures.emplace_back("dual_value_psi0", rows[0].value);
    }
    return s;
}

inline RunSummary run_conjugate(const ExperimentConfig& cfg) {
    const Utility u = detail::make_utility(cfg);
    const auto grid = detail::parse_grid(cfg.grid_spec);

    RunSummary s;
    s.command = "conjugate";
    s.params = cfg.params_json();

    CsvTable table({"y", "value", "derivative", "inverse_marginal"});
    double closed_form_gap = 0.0;
    for (double y : grid) {
        const double v = u.conjugate(y);
        table.add_numeric_row({y, v, u.conjugate_derivative(y), u.inverse_marginal(y)});
        if (u.kind() == UtilityKind::Log)
            closed_form_gap = std::max(closed_form_gap, std::fabs(v - (-std::log(y) - 1.0)));
        else if (u.kind() == UtilityKind::Power)
            closed_form_gap =
                std::max(closed_form_gap, std::fabs(v - (-std::pow(y, u.q()) / u.q())));
    }
    table.write(cfg.out_dir / "conjugate.csv");
    s.artifacts.push_back("conjugate.csv");

    if (u.kind() != UtilityKind::Tabulated)
        s.checks.push_back(
            Check::at_most("closed_form_max_gap", closed_form_gap, cfg.tol("closed_form", 1e-12)));

    // Seeded spot check of the defining inequality.
    if (u.kind() != UtilityKind::Tabulated) {
        const CounterRng rng(cfg.seed);
        double min_gap = std::numeric_limits<double>::infinity();
        double eq_gap = 0.0;
        for (std::uint64_t i = 0; i < 2000; ++i) {
            const double xx = std::exp(std::log(1e-3) + rng.uniform(i, 0, 0) * std::log(1e6));
            const double yy = std::exp(std::log(1e-3) + rng.uniform(i, 0, 1) * std::log(1e6));
            min_gap = std::min(min_gap, u.fenchel_gap(xx, yy));
            eq_gap = std::max(eq_gap, std::fabs(u.fenchel_gap(xx, u.marginal(xx))));
        }
        s.checks.push_back(Check::at_least("fenchel_min_gap", min_gap, -cfg.tol("fenchel", 1e-12)));
        s.checks.push_back(
            Check::at_most("fenchel_equality_gap", eq_gap, cfg.tol("fenchel_equality", 1e-10)));
    }
    s.key_figures.emplace_back("grid_points", static_cast<double>(grid.size()));
    return s;
}

inline int execute(const ExperimentConfig& cfg);

inline RunSummary run_sweep(const ExperimentConfig& cfg) {
    if (cfg.base_path.empty()) throw config_error("missing --base config");
    if (cfg.axis.empty()) throw config_error("missing --axis");
    const auto eq = cfg.axis.find('=');
    if (eq == std::string::npos) throw config_error("axis must be name=v1,v2,...");
    const std::string name = cfg.axis.substr(0, eq);
    std::vector<double> values;
    {
        std::stringstream ss(cfg.axis.substr(eq + 1));
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    }
    if (values.empty()) throw config_error("axis has no values");

    ExperimentConfig base = ExperimentConfig::from_json(detail::load_json_file(cfg.base_path));
    if (base.command.empty() || base.command == "sweep")
        throw config_error("sweep base must name a non-sweep command");
    for (const auto& [k, v] : cfg.tolerances) base.tolerances[k] = v;

    RunSummary s;
    s.command = "sweep";
    s.params = cfg.params_json();
    s.params["axis"] = cfg.axis;
    s.params["base_command"] = base.command;

    std::vector<std::string> header{name, "pass"};
    std::vector<std::vector<std::string>> rows;
    bool header_done = false;
    int failures = 0;

    for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig cell = base;
        cell.overrides[name] = values[i];
        cell.out_dir = cfg.out_dir / ("cell_" + std::to_string(i));
        std::filesystem::create_directories(cell.out_dir);
        std::vector<std::string> row{format_number(values[i])};
        try {
            const int code = execute(cell);
            // execute() wrote summary.json; reread the key figures for the row.
            const auto sj = detail::load_json_file((cell.out_dir / "summary.json").string());
            if (!header_done) {
                for (const auto& [k, v] : sj.at("key_figures").items()) {
                    (void)v;
                    header.push_back(k);
                }
                header_done = true;
            }
            row.push_back(code == 0 ? "1" : "0");
            for (const auto& [k, v] : sj.at("key_figures").items()) {
                (void)k;
                row.push_back(format_number(v.get<double>()));
            }
            if (code != 0) ++failures;
        } catch (const std::exception&) {
            row.push_back("0");
            ++failures;
        }
        row.resize(std::max(row.size(), std::size_t{2}));
        rows.push_back(std::move(row));
    }

    CsvTable table(header);
    for (auto& row : rows) {
        row.resize(header.size(), "");
        table.add_row(row);
    }
    table.write(cfg.out_dir / "sweep.csv");
    s.artifacts.push_back("sweep.csv");
    s.checks.push_back(Check::at_most("failed_cells", static_cast<double>(failures), 0.0));
    s.key_figures.emplace_back("cells", static_cast<double>(values.size()));
    return s;
}

// Runs one experiment into cfg.out_dir. Exit status: 0 when every check
// passes, 1 on numerical failures, 2 on configuration/input problems.
inline int execute(const ExperimentConfig& cfg) {
    try {
        std::filesystem::create_directories(cfg.out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    RunSummary summary;
    try {
        if (cfg.command == "tree-duality") summary = run_tree_duality(cfg);
        else if (cfg.command == "superhedge") summary = run_superhedge(cfg);
        else if (cfg.command == "bessel") summary = run_bessel(cfg);
        else if (cfg.command == "conjugate") summary = run_conjugate(cfg);
        else if (cfg.command == "sweep") summary = run_sweep(cfg);
        else throw config_error("unknown command: " + cfg.command);
    } catch (const config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        // Numerical failure inside a solver: record it as a failed run.
        summary.command = cfg.command;
        summary.params = cfg.params_json();
        summary.params["error"] = std::string(e.what());
        summary.checks.push_back(Check::at_most("completed", 0.0, -1.0));
        write_json_file(cfg.out_dir / "summary.json", summary.to_json());
        write_metadata(cfg.out_dir, summary);
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    }
    write_json_file(cfg.out_dir / "summary.json", summary.to_json());
    write_metadata(cfg.out_dir, summary);
    return summary.all_pass() ? 0 : 1;
}

} // namespace duallab
