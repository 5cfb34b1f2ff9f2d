#pragma once

#include <string>

#include "vfo/fit.hpp"
#include "vfo/phase.hpp"
#include "vfo/signal.hpp"

namespace vfo {

struct RunConfig {
    PhysicalConstants constants;

    // simulation
    double dt = 0.01;
    double t_end = 300.0;
    double c_r = 0.1;
    double c_l = 0.1;
    double settle_fraction = 0.5;
    double cluster_tol = 1e-2;

    InverseFilterConfig filter;

    OptimizerConfig optimizer;  // constants/dt/c_r/c_l mirrored in normalize()

    std::string regions_path;  // empty = built-in table

    unsigned workers = 0;  // 0 = hardware concurrency

    // copies the shared fields into the optimizer sub-config and validates
    void normalize();
};

// TOML-style subset: [section] headers, key = value, # comments; unknown
// sections or keys are rejected
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// canonical dump containing every key; parse_config(dump_config(c)) == c
std::string dump_config(const RunConfig& cfg);

}
