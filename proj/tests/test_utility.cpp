#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "duallab/utility.hpp"
#include "oracles.hpp"

using duallab::Utility;

namespace {

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / (n - 1));
    return g;
}

Utility tabulated_log(std::size_t points = 20001, double lo = 1e-4, double hi = 1e6) {
    auto xs = log_spaced(lo, hi, points);
    std::vector<double> us(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) us[i] = std::log(xs[i]);
    return Utility::make_tabulated(xs, us);
}

} // namespace

TEST_CASE("log utility closed forms") {
    const auto u = Utility::make_log();
    CHECK(u.value(1.0) == 0.0);
    CHECK(u.marginal(2.0) == 0.5);
    CHECK(u.inverse_marginal(4.0) == 0.25);
    CHECK(u.conjugate(1.0) == -1.0);
    CHECK_THAT(u.conjugate(2.0), Catch::Matchers::WithinAbs(-std::log(2.0) - 1.0, 1e-15));
}

TEST_CASE("power utility closed forms") {
    const auto u_half = Utility::make_power(0.5);
    CHECK_THAT(u_half.value(4.0), Catch::Matchers::WithinAbs(4.0, 1e-14));
    CHECK_THAT(u_half.marginal(4.0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK(u_half.marginal(1.0) == 1.0);
    CHECK_THAT(u_half.inverse_marginal(4.0), Catch::Matchers::WithinAbs(0.0625, 1e-16));
    CHECK_THAT(u_half.conjugate(2.0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK(u_half.q() == -1.0);

    const auto u_neg = Utility::make_power(-1.0);
    CHECK_THAT(u_neg.value(2.0), Catch::Matchers::WithinAbs(-0.5, 1e-15));
    CHECK(u_neg.q() == 0.5);

    for (double p : {0.5, -1.0, 0.9}) {
        const auto u = Utility::make_power(p);
        CHECK_THAT((1.0 - u.q()) * (1.0 - p), Catch::Matchers::WithinAbs(1.0, 1e-15));
    }
}

TEST_CASE("domain and construction errors") {
    const auto u = Utility::make_log();
    CHECK_THROWS_AS(u.value(0.0), std::domain_error);
    CHECK_THROWS_AS(u.value(-1.0), std::domain_error);
    CHECK_THROWS_AS(u.marginal(0.0), std::domain_error);
    CHECK_THROWS_AS(u.inverse_marginal(-2.0), std::domain_error);
    CHECK_THROWS_AS(u.conjugate(0.0), std::domain_error);
    CHECK_THROWS_AS(Utility::make_power(0.0), duallab::invalid_crra_error);
    CHECK_THROWS_AS(Utility::make_power(1.0), duallab::invalid_crra_error);
    CHECK_THROWS_AS(Utility::make_power(1.5), duallab::invalid_crra_error);
}

TEST_CASE("inverse marginal round-trip") {
    for (double p : {0.5, -1.0, 0.9}) {
        const auto u = Utility::make_power(p);
        for (double y : {0.1, 1.0, 10.0}) {
            const double x = u.inverse_marginal(y);
            CHECK_THAT(u.marginal(x) / y, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
    }
    const auto ul = Utility::make_log();
    for (double y : {0.1, 1.0, 10.0})
        CHECK_THAT(ul.marginal(ul.inverse_marginal(y)) / y, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("fenchel gap identities") {
    const auto ul = Utility::make_log();
    CHECK_THAT(ul.fenchel_gap(1.0, 1.0), Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(ul.fenchel_gap(1.0, 2.0),
               Catch::Matchers::WithinAbs(2.0 - 1.0 - std::log(2.0), 1e-14));
    const auto uh = Utility::make_power(0.5);
    for (double y : {0.5, 1.0, 3.0})
        CHECK_THAT(uh.fenchel_gap(uh.inverse_marginal(y), y), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("fenchel inequality over random arguments") {
    std::mt19937_64 rng(20240901);
    std::uniform_real_distribution<double> logu(std::log(1e-3), std::log(1e3));
    std::vector<Utility> kinds{Utility::make_log(), Utility::make_power(-1.0),
                               Utility::make_power(0.5), Utility::make_power(0.9)};
    for (const auto& u : kinds) {
        for (int i = 0; i < 10000; ++i) {
            const double x = std::exp(logu(rng));
            const double y = std::exp(logu(rng));
            CHECK(u.fenchel_gap(x, y) >= -1e-12);
        }
        for (int i = 0; i < 200; ++i) {
            const double x = std::exp(logu(rng));
            CHECK(std::fabs(u.fenchel_gap(x, u.marginal(x))) <= 1e-10);
        }
    }
}

TEST_CASE("bi-duality: infimum of V(y)+xy recovers U(x) from above") {
    std::vector<Utility> kinds{Utility::make_log(), Utility::make_power(0.5),
                               Utility::make_power(-1.0)};
    for (const auto& u : kinds) {
        for (double x : {0.37, 1.0, 5.1}) {
            const double ystar = u.marginal(x);
            const auto grid = log_spaced(ystar / 100.0, ystar * 100.0, 10000);
            double inf = std::numeric_limits<double>::infinity();
            for (double y : grid) inf = std::min(inf, u.conjugate(y) + x * y);
            const double gap = inf - u.value(x);
            CHECK(gap >= -1e-12);
            CHECK(gap <= 1e-6);
        }
    }
}

TEST_CASE("power conjugate matches -y^q/q at machine precision") {
    for (double p : {0.5, -1.0, 0.9}) {
        const auto u = Utility::make_power(p);
        const double q = u.q();
        for (double y : log_spaced(1e-3, 1e3, 61)) {
            const double expected = -std::pow(y, q) / q;
            CHECK_THAT(u.conjugate(y), Catch::Matchers::WithinRel(expected, 1e-15));
        }
    }
}

TEST_CASE("tabulated log utility") {
    const auto u = tabulated_log();

    SECTION("interpolation accuracy") {
        CHECK_THAT(u.value(2.0), Catch::Matchers::WithinAbs(std::log(2.0), 1e-10));
        CHECK_THAT(u.marginal(2.0), Catch::Matchers::WithinAbs(0.5, 1e-7));
    }

    SECTION("strict monotonicity on an evaluation grid") {
        const auto grid = log_spaced(2e-4, 5e5, 400);
        for (std::size_t i = 1; i < grid.size(); ++i) {
            CHECK(u.value(grid[i]) > u.value(grid[i - 1]));
            CHECK(u.marginal(grid[i]) < u.marginal(grid[i - 1]));
        }
    }

    SECTION("numeric conjugate against a golden-section oracle on the true function") {
        const double oracle_x = std::exp(oracles::golden_max(
            [](double s) { return std::log(std::exp(s)) - std::exp(s) * 2.0; }, std::log(1e-4),
            std::log(1e6), 1e-14));
        const double oracle_value = std::log(oracle_x) - oracle_x * 2.0;
        CHECK_THAT(oracle_value, Catch::Matchers::WithinAbs(-std::log(2.0) - 1.0, 1e-10));
        CHECK_THAT(u.conjugate(2.0), Catch::Matchers::WithinAbs(oracle_value, 1e-8));
    }

    SECTION("inverse marginal round-trip") {
        for (double y : {0.1, 1.0, 10.0}) {
            const double x = u.inverse_marginal(y);
            CHECK_THAT(u.marginal(x) / y, Catch::Matchers::WithinAbs(1.0, 1e-9));
        }
    }

    SECTION("no extrapolation outside the table") {
        CHECK_THROWS_AS(u.value(5e-5), std::domain_error);
        CHECK_THROWS_AS(u.value(2e6), std::domain_error);
        CHECK_THROWS_AS(u.conjugate(2e4), std::domain_error);
        CHECK_THROWS_AS(u.conjugate(1e-7), duallab::unbounded_conjugate_error);
    }
}

TEST_CASE("utility table parsing") {
    std::istringstream in("# toy table\n0.5 -0.6931\n1.0 0.0\n2.0 0.6931\n4.0 1.3863\n");
    const auto u = Utility::from_table(in);
    CHECK_THAT(u.value(1.0), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK(u.domain_floor() == 0.5);

    std::istringstream too_short("1.0 0.0\n2.0 0.7\n");
    CHECK_THROWS_AS(Utility::from_table(too_short), duallab::config_error);
}

TEST_CASE("asymptotic elasticity estimates") {
    const auto grid = log_spaced(1e-2, 1e6, 200);
    const auto half = duallab::asymptotic_elasticity(Utility::make_power(0.5), grid);
    CHECK_THAT(half.value, Catch::Matchers::WithinAbs(0.5, 1e-6));
    CHECK(half.satisfied);

    const auto strong = duallab::asymptotic_elasticity(Utility::make_power(0.9), grid);
    CHECK_THAT(strong.value, Catch::Matchers::WithinAbs(0.9, 1e-6));
    CHECK(strong.satisfied);

    const auto lg = duallab::asymptotic_elasticity(Utility::make_log(), grid);
    CHECK(lg.value > 0.0);
    CHECK(lg.value <= 1.0 / std::log(1e5));
    CHECK(lg.satisfied);

    // Utility bounded above by zero: the tail ratio is reported as zero with
    // the sign note rather than a bogus positive estimate.
    const auto bounded = duallab::asymptotic_elasticity(Utility::make_power(-1.0), grid);
    CHECK(bounded.value == 0.0);
    CHECK(bounded.tail_nonpositive);
    CHECK(bounded.satisfied);

    CHECK_THROWS_AS(duallab::asymptotic_elasticity(Utility::make_log(),
                                                   std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(duallab::asymptotic_elasticity(Utility::make_log(),
                                                   std::vector<double>{1.0, 2.0, 500.0}),
                    std::invalid_argument);
}

TEST_CASE("inada condition reports") {
    CHECK(duallab::check_inada(Utility::make_log()).passed);
    CHECK(duallab::check_inada(Utility::make_power(0.5)).passed);

    // Tabulated linear utility: marginal is 1 at both ends, so both limits fail.
    auto xs = log_spaced(1e-5, 1e7, 4001);
    const auto linear = Utility::make_tabulated(xs, xs);
    const auto rep = duallab::check_inada(linear);
    CHECK_FALSE(rep.zero_end_ok);
    CHECK_FALSE(rep.infinity_end_ok);
    CHECK_FALSE(rep.passed);

    CHECK_THROWS_AS(duallab::check_inada(Utility::make_log(), 2.0, 1e6), std::invalid_argument);
}
