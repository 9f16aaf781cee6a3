// Experiment driver: every number it emits comes from a library operation;
// the binary only parses flags, dispatches, and sets the exit status.

#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "duallab/experiment.hpp"

namespace {

void apply_tolerances(duallab::ExperimentConfig& cfg, const std::vector<std::string>& entries) {
    for (const auto& e : entries) {
        const auto eq = e.find('=');
        if (eq == std::string::npos)
            throw duallab::config_error("tolerance must be name=value: " + e);
        cfg.tolerances[e.substr(0, eq)] = std::stod(e.substr(eq + 1));
    }
}

std::string default_out() {
    const char* env = std::getenv("DUALLAB_OUT");
    return env ? env : ".";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"duallab: consumption-duality laboratory on event trees and Monte Carlo paths"};
    app.require_subcommand(1);

    duallab::ExperimentConfig cfg;
    cfg.out_dir = default_out();
    std::vector<std::string> tolerance_entries;
    bool seed_given = false;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", cfg.seed, "seed for any randomized part of the run")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--tolerance", tolerance_entries,
                        "override a check threshold, name=value (repeatable)");
    };

    auto* tree_duality = app.add_subcommand("tree-duality",
                                            "solve primal and dual problems on an event tree "
                                            "and certify the optimality relations");
    tree_duality->add_option("--tree", cfg.tree_path, "tree JSON file")->required();
    tree_duality->add_option("--utility", cfg.utility, "log | power | table:FILE")
        ->capture_default_str();
    tree_duality->add_option("--p", cfg.p, "power exponent (p < 1, p != 0)")
        ->capture_default_str();
    tree_duality->add_option("--x", cfg.x, "initial capital")->capture_default_str();
    double alpha = 0.0;
    auto* alpha_opt = tree_duality->add_option("--alpha", alpha, "override the tree's discount rate");
    add_common(tree_duality);

    auto* superhedge = app.add_subcommand(
        "superhedge", "smallest dominating process, hedge, and optional decomposition");
    superhedge->add_option("--tree", cfg.tree_path, "tree JSON file")->required();
    superhedge
        ->add_option("--claim", cfg.claim,
                     "zero | put:K | call:K | file:VALUES.json | cumcons:PLAN.json")
        ->capture_default_str();
    add_common(superhedge);

    auto* bessel = app.add_subcommand("bessel",
                                      "radial-process Monte Carlo lab: strict local martingale "
                                      "deflator and closed-form consumption identities");
    bessel->add_option("--config", cfg.sde_config_path, "simulation config JSON")->required();
    add_common(bessel);

    auto* conjugate =
        app.add_subcommand("conjugate", "tabulate a utility's convex conjugate over a grid");
    conjugate->add_option("--utility", cfg.utility, "log | power | table:FILE")
        ->capture_default_str();
    conjugate->add_option("--p", cfg.p, "power exponent")->capture_default_str();
    conjugate->add_option("--grid", cfg.grid_spec, "lo:hi:count[:lin]")->capture_default_str();
    add_common(conjugate);

    auto* sweep = app.add_subcommand("sweep", "run a base experiment across one parameter axis");
    sweep->add_option("--base", cfg.base_path, "base experiment config JSON")->required();
    sweep->add_option("--axis", cfg.axis, "name=v1,v2,...")->required();
    add_common(sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        apply_tolerances(cfg, tolerance_entries);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    if (alpha_opt->count() > 0) cfg.alpha_override = alpha;
    if (tree_duality->parsed()) cfg.command = "tree-duality";
    if (superhedge->parsed()) cfg.command = "superhedge";
    if (bessel->parsed()) {
        cfg.command = "bessel";
        if (seed_given) cfg.overrides["seed"] = static_cast<double>(cfg.seed);
    }
    if (conjugate->parsed()) cfg.command = "conjugate";
    if (sweep->parsed()) cfg.command = "sweep";

    return duallab::execute(cfg);
}
