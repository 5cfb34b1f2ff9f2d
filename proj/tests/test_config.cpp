#include <cstdio>
#include <fstream>
#include <string>

#include <doctest.h>

#include "vfo/config.hpp"
#include "vfo/errors.hpp"

using vfo::RunConfig;

TEST_CASE("an empty config yields the documented defaults") {
    const RunConfig cfg = vfo::parse_config("");
    CHECK(cfg.dt == 0.01);
    CHECK(cfg.t_end == 300.0);
    CHECK(cfg.c_r == 0.1);
    CHECK(cfg.c_l == 0.1);
    CHECK(cfg.settle_fraction == 0.5);
    CHECK(cfg.constants.xi0 == 0.1);
    CHECK(cfg.constants.fold_length == 1.75);
    CHECK(cfg.constants.air_density == 1.14e-3);
    CHECK(cfg.constants.sound_speed == 3.5e4);
    CHECK(cfg.constants.glottal_area == 0.3);
    CHECK(cfg.filter.preemphasis == 0.97);
    CHECK(cfg.optimizer.tau_alpha == 1e-3);
    CHECK(cfg.optimizer.max_iters == 500);
    CHECK(cfg.optimizer.adjoint_form == vfo::AdjointForm::full);
    CHECK(cfg.regions_path.empty());
    CHECK(cfg.workers == 0);

    SUBCASE("shared fields are mirrored into the optimizer") {
        CHECK(cfg.optimizer.dt == cfg.dt);
        CHECK(cfg.optimizer.c_r == cfg.c_r);
        CHECK(cfg.optimizer.constants.fold_length == cfg.constants.fold_length);
    }
}

TEST_CASE("values parse with sections, comments, and quoted strings") {
    const std::string text = R"(# toolkit configuration
[simulation]
dt = 0.005   # finer grid
t_end = 150
c_r = 0.12

[optimizer]
max_iters = 250
quasi_newton = true
adjoint_form = "undamped"

[classify]
regions_path = "tables/my#regions.json"

[batch]
workers = 3
)";
    const RunConfig cfg = vfo::parse_config(text);
    CHECK(cfg.dt == 0.005);
    CHECK(cfg.t_end == 150.0);
    CHECK(cfg.c_r == 0.12);
    CHECK(cfg.optimizer.max_iters == 250);
    CHECK(cfg.optimizer.quasi_newton);
    CHECK(cfg.optimizer.adjoint_form == vfo::AdjointForm::undamped);
    CHECK(cfg.regions_path == "tables/my#regions.json");
    CHECK(cfg.workers == 3);
    CHECK(cfg.optimizer.dt == 0.005);  // mirror follows the parsed value
    CHECK(cfg.optimizer.c_r == 0.12);
}

TEST_CASE("unknown sections and keys are rejected") {
    CHECK_THROWS_AS(vfo::parse_config("[nope]\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[simulation]\nwarp_speed = 9\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("dt = 0.01\n"), vfo::ConfigError);  // outside a section
    CHECK_THROWS_AS(vfo::parse_config("[simulation\ndt = 0.01\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[simulation]\njust some words\n"), vfo::ConfigError);
}

TEST_CASE("malformed values are rejected with the offending key") {
    CHECK_THROWS_AS(vfo::parse_config("[simulation]\ndt = fast\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[optimizer]\nquasi_newton = yes\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[optimizer]\nadjoint_form = \"exact\"\n"),
                    vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[batch]\nworkers = -1\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[batch]\nworkers = 1.5\n"), vfo::ConfigError);

    try {
        vfo::parse_config("[simulation]\ndt = fast\n");
    } catch (const vfo::ConfigError& e) {
        CHECK(std::string(e.what()).find("fast") != std::string::npos);
    }
}

TEST_CASE("out-of-range values fail validation") {
    CHECK_THROWS_AS(vfo::parse_config("[simulation]\ndt = 0\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[simulation]\nsettle_fraction = 1\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[inverse_filter]\npreemphasis = 1.0\n"),
                    vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[optimizer]\nftol_patience = 0\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[constants]\nxi0 = -0.1\n"), vfo::ConfigError);
    CHECK_THROWS_AS(vfo::parse_config("[optimizer]\ntau_beta = 0\n"), vfo::ConfigError);
}

TEST_CASE("dump and parse round-trip exactly") {
    const RunConfig defaults = vfo::parse_config("");
    const std::string dumped = vfo::dump_config(defaults);
    CHECK(vfo::dump_config(vfo::parse_config(dumped)) == dumped);

    SUBCASE("a modified config survives the cycle too") {
        const RunConfig cfg = vfo::parse_config(
            "[simulation]\ndt = 0.0025\n[optimizer]\nquasi_newton = true\n"
            "adjoint_form = \"undamped\"\n[classify]\nregions_path = \"r.json\"\n");
        const std::string d1 = vfo::dump_config(cfg);
        CHECK(vfo::dump_config(vfo::parse_config(d1)) == d1);
        CHECK(vfo::parse_config(d1).dt == cfg.dt);  // full-precision numbers survive
        CHECK(d1.find("regions_path = \"r.json\"") != std::string::npos);
    }

    SUBCASE("every schema key appears in the dump") {
        for (const char* key :
             {"xi0", "fold_length", "air_density", "sound_speed", "glottal_area",
              "midpoint_velocity", "dt", "t_end", "c_r", "c_l", "settle_fraction",
              "cluster_tol", "lpc_order", "frame_ms", "hop_ms", "preemphasis", "lowpass_hz",
              "tau_alpha", "tau_beta", "tau_delta", "max_iters", "grad_tol", "ftol",
              "ftol_patience", "max_halvings", "quasi_newton", "fit_horizon",
              "discard_fraction", "calibrate_gain", "adjoint_form", "alpha_min", "alpha_max",
              "beta_min", "beta_max", "delta_min", "delta_max", "regions_path", "workers"})
            CHECK(dumped.find(std::string(key) + " = ") != std::string::npos);
    }
}

TEST_CASE("config files load from disk and missing paths fail cleanly") {
    const std::string path = "config_load_test.toml";
    {
        std::ofstream os(path);
        os << "[simulation]\nt_end = 42\n";
    }
    const RunConfig cfg = vfo::load_config_file(path);
    CHECK(cfg.t_end == 42.0);
    std::remove(path.c_str());

    CHECK_THROWS_AS(vfo::load_config_file("no_such_config.toml"), vfo::ConfigError);
}
