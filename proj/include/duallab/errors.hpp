#pragma once

#include <stdexcept>
#include <string>

namespace duallab {

// Failure taxonomy for the lab. Everything derives from std::runtime_error so
// callers can catch coarsely; the CLI maps parse/config errors to exit 2 and
// numeric check failures to exit 1.

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct size_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Empty one-step martingale polytope: a conditional arbitrage, so no deflator
// exists through that node.
struct no_deflator_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_measure_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct unbounded_conjugate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dual_infinite_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct calibration_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The direct primal solver is an oracle: if it cannot certify convergence it
// must say so loudly rather than hand back a guess.
struct oracle_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct decomposition_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct statistics_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_crra_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace duallab
