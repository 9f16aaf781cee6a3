#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "duallab/experiment.hpp"

using namespace duallab;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DUALLAB_FIXTURE_DIR;

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("duallab_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

} // namespace

TEST_CASE("csv formatting is fixed-width deterministic") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1.0 / 3.0) == format_number(1.0 / 3.0));
    CsvTable t({"a", "b"});
    t.add_numeric_row({1.0, 2.5});
    CHECK(t.body() == "a,b\n1,2.5\n");
    CHECK_THROWS_AS(t.add_row({"only-one"}), std::invalid_argument);
}

TEST_CASE("tree-duality run on the bundled binomial fixture") {
    ExperimentConfig cfg;
    cfg.command = "tree-duality";
    cfg.tree_path = (kFixtures / "binomial.json").string();
    cfg.utility = "log";
    cfg.x = 1.0;
    cfg.out_dir = fresh_dir("td");

    REQUIRE(execute(cfg) == 0);

    const auto summary = read_json(cfg.out_dir / "summary.json");
    CHECK(summary.at("pass").get<bool>());
    const auto report = read_json(cfg.out_dir / "report.json");
    CHECK(std::fabs(report.at("conjugacy_gap").get<double>()) <= 1e-8);
    CHECK_THAT(report.at("y_star").get<double>(), Catch::Matchers::WithinAbs(2.0, 1e-8));
    CHECK(fs::exists(cfg.out_dir / "results.csv"));
    CHECK(fs::exists(cfg.out_dir / "metadata.json"));
}

TEST_CASE("superhedge run writes the put hedge") {
    ExperimentConfig cfg;
    cfg.command = "superhedge";
    cfg.tree_path = (kFixtures / "binomial.json").string();
    cfg.claim = "put:1.0";
    cfg.out_dir = fresh_dir("sh");

    REQUIRE(execute(cfg) == 0);
    const auto summary = read_json(cfg.out_dir / "summary.json");
    CHECK(summary.at("pass").get<bool>());
    CHECK_THAT(summary.at("key_figures").at("w0").get<double>(),
               Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("superhedge accepts a cumulative-consumption claim") {
    const auto dir = fresh_dir("sh_cum");
    // Root consumes the whole unit of capital over the first period.
    write_file(dir / "plan.json", R"({"rate": [1.0, 0.0, 0.0]})");
    ExperimentConfig cfg;
    cfg.command = "superhedge";
    cfg.tree_path = (kFixtures / "binomial.json").string();
    cfg.claim = "cumcons:" + (dir / "plan.json").string();
    cfg.out_dir = dir / "out";
    REQUIRE(execute(cfg) == 0);
    const auto summary = read_json(cfg.out_dir / "summary.json");
    CHECK_THAT(summary.at("key_figures").at("w0").get<double>(),
               Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("tree-duality honors a discount-rate override") {
    ExperimentConfig cfg;
    cfg.command = "tree-duality";
    cfg.tree_path = (kFixtures / "binomial.json").string();
    cfg.utility = "log";
    cfg.x = 1.0;
    cfg.alpha_override = 0.2;
    cfg.out_dir = fresh_dir("td_alpha");
    REQUIRE(execute(cfg) == 0);
    const auto report = read_json(cfg.out_dir / "report.json");
    // With discounting, y* = (kappa_0 + kappa_1)/x < 2 for log utility.
    const double expected = 1.0 + std::exp(-0.2);
    CHECK_THAT(report.at("y_star").get<double>(), Catch::Matchers::WithinAbs(expected, 1e-8));
    CHECK(report.contains("clock_tail_weight"));
}

TEST_CASE("bessel run passes at a sane step size and fails when dt is too coarse") {
    const auto dir = fresh_dir("bessel_cfg");
    write_file(dir / "ok.json",
               R"({"alpha":0.1,"x":1.0,"p":0.0,"horizon":1.0,"dt":0.02,"n_paths":4000,"seed":11})");
    write_file(dir / "coarse.json",
               R"({"alpha":0.1,"x":1.0,"p":0.0,"horizon":1.0,"dt":0.2,"n_paths":4000,"seed":11})");

    ExperimentConfig cfg;
    cfg.command = "bessel";
    cfg.sde_config_path = (dir / "ok.json").string();
    cfg.out_dir = fresh_dir("bessel_ok");
    REQUIRE(execute(cfg) == 0);
    CHECK(fs::exists(cfg.out_dir / "z0_stats.csv"));
    CHECK(fs::exists(cfg.out_dir / "potential.csv"));

    ExperimentConfig coarse = cfg;
    coarse.sde_config_path = (dir / "coarse.json").string();
    coarse.out_dir = fresh_dir("bessel_coarse");
    REQUIRE(execute(coarse) == 1);
    const auto summary = read_json(coarse.out_dir / "summary.json");
    bool found_named_failure = false;
    for (const auto& c : summary.at("checks")) {
        if (c.at("name") == "mhat_max_residual" && !c.at("pass").get<bool>())
            found_named_failure = true;
    }
    CHECK(found_named_failure);
}

TEST_CASE("bessel run with a power exponent emits the dual scan") {
    const auto dir = fresh_dir("bessel_pow_cfg");
    write_file(dir / "pow.json",
               R"({"alpha":0.1,"x":1.0,"p":0.5,"horizon":1.0,"dt":0.02,"n_paths":4000,"seed":11})");
    ExperimentConfig cfg;
    cfg.command = "bessel";
    cfg.sde_config_path = (dir / "pow.json").string();
    cfg.out_dir = fresh_dir("bessel_pow");
    REQUIRE(execute(cfg) == 0);
    CHECK(fs::exists(cfg.out_dir / "psi_scan.csv"));
    const auto summary = read_json(cfg.out_dir / "summary.json");
    CHECK(summary.at("pass").get<bool>());
}

TEST_CASE("conjugate table matches closed forms") {
    ExperimentConfig cfg;
    cfg.command = "conjugate";
    cfg.utility = "power";
    cfg.p = 0.5;
    cfg.grid_spec = "1e-2:1e2:25";
    cfg.out_dir = fresh_dir("conj");
    REQUIRE(execute(cfg) == 0);
    const auto body = slurp(cfg.out_dir / "conjugate.csv");
    CHECK(body.rfind("y,value,derivative,inverse_marginal\n", 0) == 0);
    const auto summary = read_json(cfg.out_dir / "summary.json");
    CHECK(summary.at("pass").get<bool>());
}

TEST_CASE("sweeps iterate one axis with record-and-continue semantics") {
    SECTION("x sweep of tree duality has increasing utility values") {
        const auto dir = fresh_dir("sweep_x");
        nlohmann::ordered_json base;
        base["command"] = "tree-duality";
        base["tree"] = (kFixtures / "binomial.json").string();
        base["utility"] = "log";
        base["x"] = 1.0;
        write_file(dir / "base.json", base.dump());

        ExperimentConfig cfg;
        cfg.command = "sweep";
        cfg.base_path = (dir / "base.json").string();
        cfg.axis = "x=0.5,1.0,2.0";
        cfg.out_dir = dir / "out";
        REQUIRE(execute(cfg) == 0);

        const auto body = slurp(cfg.out_dir / "sweep.csv");
        std::vector<double> u_values;
        std::istringstream lines(body);
        std::string line;
        std::getline(lines, line);
        std::size_t u_col = 0;
        {
            std::istringstream hs(line);
            std::string cell;
            for (std::size_t i = 0; std::getline(hs, cell, ','); ++i)
                if (cell == "u_of_x") u_col = i;
            REQUIRE(u_col > 0);
        }
        while (std::getline(lines, line)) {
            std::istringstream ls(line);
            std::string cell;
            for (std::size_t i = 0; std::getline(ls, cell, ','); ++i)
                if (i == u_col) u_values.push_back(std::stod(cell));
        }
        REQUIRE(u_values.size() == 3);
        CHECK(u_values[0] < u_values[1]);
        CHECK(u_values[1] < u_values[2]);
    }
    SECTION("a failing cell is recorded and the sweep continues") {
        const auto dir = fresh_dir("sweep_fail");
        write_file(dir / "sde.json",
                   R"({"alpha":0.1,"x":1.0,"p":0.0,"horizon":1.0,"dt":0.02,"n_paths":2000,"seed":3})");
        nlohmann::ordered_json base;
        base["command"] = "bessel";
        base["config"] = (dir / "sde.json").string();
        write_file(dir / "base.json", base.dump());

        ExperimentConfig cfg;
        cfg.command = "sweep";
        cfg.base_path = (dir / "base.json").string();
        cfg.axis = "dt=0.02,0.2"; // the coarse step violates the residual bound
        cfg.out_dir = dir / "out";
        CHECK(execute(cfg) == 1);
        const auto body = slurp(cfg.out_dir / "sweep.csv");
        CHECK(body.find("\n" + format_number(0.02) + ",1") != std::string::npos);
        CHECK(body.find("\n" + format_number(0.2) + ",0") != std::string::npos);
    }
    SECTION("empty axis is a configuration error") {
        const auto dir = fresh_dir("sweep_empty");
        nlohmann::ordered_json base;
        base["command"] = "tree-duality";
        base["tree"] = (kFixtures / "binomial.json").string();
        write_file(dir / "base.json", base.dump());
        ExperimentConfig cfg;
        cfg.command = "sweep";
        cfg.base_path = (dir / "base.json").string();
        cfg.axis = "x=";
        cfg.out_dir = dir / "out";
        CHECK(execute(cfg) == 2);
    }
}

TEST_CASE("configuration problems exit with status 2") {
    ExperimentConfig cfg;
    cfg.command = "no-such-command";
    cfg.out_dir = fresh_dir("bad");
    CHECK(execute(cfg) == 2);

    cfg.command = "tree-duality";
    cfg.tree_path = "/nonexistent/tree.json";
    CHECK(execute(cfg) == 2);
}

TEST_CASE("reruns produce byte-identical CSV bodies") {
    const auto dir_a = fresh_dir("det_a");
    const auto dir_b = fresh_dir("det_b");
    const auto cfg_dir = fresh_dir("det_cfg");
    write_file(cfg_dir / "sde.json",
               R"({"alpha":0.1,"x":1.0,"p":0.0,"horizon":1.0,"dt":0.02,"n_paths":3000,"seed":5})");

    for (const std::string cmd : {"tree-duality", "bessel", "conjugate"}) {
        ExperimentConfig cfg;
        cfg.command = cmd;
        cfg.tree_path = (kFixtures / "binomial.json").string();
        cfg.sde_config_path = (cfg_dir / "sde.json").string();
        cfg.utility = "log";
        cfg.out_dir = dir_a / cmd;
        REQUIRE(execute(cfg) == 0);
        cfg.out_dir = dir_b / cmd;
        REQUIRE(execute(cfg) == 0);
        for (const auto& entry : fs::directory_iterator(dir_a / cmd)) {
            if (entry.path().extension() != ".csv") continue;
            const auto other = dir_b / cmd / entry.path().filename();
            CHECK(slurp(entry.path()) == slurp(other));
        }
    }
}
