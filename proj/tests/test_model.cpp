#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "vfo/errors.hpp"
#include "vfo/model.hpp"

using vfo::ModelParams;
using vfo::State;
using vfo::StateDerivative;
using vfo::Trajectory;

namespace {

ModelParams reference_params() { return ModelParams{0.5, 0.32, 0.0, 0.1, 0.1}; }

// max absolute difference between two trajectories over shared states
double max_state_diff(const Trajectory& a, const Trajectory& b, std::size_t stride_b = 1) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const State& x = a.states[i];
        const State& y = b.states[i * stride_b];
        m = std::max(m, std::fabs(x.xi_r - y.xi_r));
        m = std::max(m, std::fabs(x.dxi_r - y.dxi_r));
        m = std::max(m, std::fabs(x.xi_l - y.xi_l));
        m = std::max(m, std::fabs(x.dxi_l - y.dxi_l));
    }
    return m;
}

}  // namespace

TEST_CASE("parameter validation accepts the reference point and rejects bad values") {
    CHECK_NOTHROW(reference_params().validate());
    CHECK_NOTHROW((ModelParams{0.0, 0.01, 2.0}).validate());

    CHECK_THROWS_AS((ModelParams{-0.1, 0.32, 0.0}).validate(), vfo::DomainError);
    CHECK_THROWS_AS((ModelParams{0.5, 0.0, 0.0}).validate(), vfo::DomainError);
    CHECK_THROWS_AS((ModelParams{0.5, -0.32, 0.0}).validate(), vfo::DomainError);
    CHECK_THROWS_AS((ModelParams{0.5, 0.32, -0.1}).validate(), vfo::DomainError);
    CHECK_THROWS_AS((ModelParams{0.5, 0.32, 2.5}).validate(), vfo::DomainError);
    ModelParams nan_param = reference_params();
    nan_param.alpha = std::nan("");
    CHECK_THROWS_AS(nan_param.validate(), vfo::DomainError);
}

TEST_CASE("vector field matches hand-computed points") {
    const ModelParams p = reference_params();

    SUBCASE("origin is an equilibrium") {
        const StateDerivative d = vfo::rhs(State{0, 0, 0, 0}, p);
        CHECK(d.dxi_r == 0.0);
        CHECK(d.ddxi_r == 0.0);
        CHECK(d.dxi_l == 0.0);
        CHECK(d.ddxi_l == 0.0);
    }

    SUBCASE("pure displacement feels only the restoring force") {
        const StateDerivative d = vfo::rhs(State{1, 0, 1, 0}, p);
        CHECK(d.dxi_r == 0.0);
        CHECK(d.ddxi_r == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(d.dxi_l == 0.0);
        CHECK(d.ddxi_l == doctest::Approx(-1.0).epsilon(1e-15));
    }

    SUBCASE("unit state combines coupling, damping, and restoring terms") {
        // alpha*(1+1) - beta*(1+1)*1 - 1 = 1.0 - 0.64 - 1.0 = -0.64 per side
        const StateDerivative d = vfo::rhs(State{1, 1, 1, 1}, p);
        CHECK(d.dxi_r == 1.0);
        CHECK(d.ddxi_r == doctest::Approx(-0.64).epsilon(1e-15));
        CHECK(d.ddxi_l == doctest::Approx(-0.64).epsilon(1e-15));
    }

    SUBCASE("asymmetry splits the stiffness with opposite signs") {
        ModelParams q = p;
        q.delta = 0.6;
        const StateDerivative d = vfo::rhs(State{1, 0, 1, 0}, q);
        CHECK(d.ddxi_r == doctest::Approx(-1.0 + 0.3).epsilon(1e-15));
        CHECK(d.ddxi_l == doctest::Approx(-1.0 - 0.3).epsilon(1e-15));
    }

    SUBCASE("non-finite input state is rejected") {
        State s;
        s.xi_r = std::nan("");
        CHECK_THROWS_AS(vfo::rhs(s, p), vfo::DomainError);
    }
}

TEST_CASE("symmetric start with zero asymmetry keeps the folds bit-identical") {
    const Trajectory traj = vfo::simulate(reference_params(), 0.01, 200.0);
    for (const State& s : traj.states) {
        REQUIRE(s.xi_r == s.xi_l);
        REQUIRE(s.dxi_r == s.dxi_l);
    }
}

TEST_CASE("all-zero initial condition is rejected, explicit start stays at rest") {
    ModelParams p = reference_params();
    p.c_r = 0.0;
    p.c_l = 0.0;
    CHECK_THROWS_AS(vfo::simulate(p, 0.01, 1.0), vfo::DomainError);

    const Trajectory traj = vfo::simulate_from(State{0, 0, 0, 0}, reference_params(), 0.01, 5.0);
    for (const State& s : traj.states) {
        CHECK(s.xi_r == 0.0);
        CHECK(s.dxi_r == 0.0);
        CHECK(s.xi_l == 0.0);
        CHECK(s.dxi_l == 0.0);
    }
}

TEST_CASE("integrator error falls at least 8x when the step is halved") {
    const ModelParams p = reference_params();
    const double t_end = 20.0;
    const Trajectory ref = vfo::simulate(p, 0.01 / 16.0, t_end);
    const Trajectory coarse = vfo::simulate(p, 0.01, t_end);
    const Trajectory fine = vfo::simulate(p, 0.005, t_end);

    const double err_coarse = max_state_diff(coarse, ref, 16);
    const double err_fine = max_state_diff(fine, ref, 8);
    REQUIRE(err_coarse > 0.0);
    CHECK(err_coarse / err_fine >= 8.0);
}

TEST_CASE("repeated runs are bit-identical") {
    ModelParams p{0.42, 0.32, 0.37, 0.1, 0.1};
    const Trajectory a = vfo::simulate(p, 0.01, 50.0);
    const Trajectory b = vfo::simulate(p, 0.01, 50.0);
    REQUIRE(a.size() == b.size());
    CHECK(max_state_diff(a, b) == 0.0);
}

TEST_CASE("runaway states raise a divergence error carrying the blow-up time") {
    const ModelParams p = reference_params();
    try {
        vfo::simulate_from(State{1e5, 1e5, -1e5, 1e5}, p, 0.01, 10.0);
        FAIL("expected a divergence error");
    } catch (const vfo::DivergenceError& e) {
        CHECK(e.time >= 0.0);
        CHECK(e.time <= 10.0);
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    }
}

TEST_CASE("trajectory covers [0, t_end] inclusively on the fixed grid") {
    const Trajectory traj = vfo::simulate(reference_params(), 0.01, 80.0);
    CHECK(traj.size() == 8001);  // the 80/0.01 quotient is below 8000 in floating point
    CHECK(traj.time(0) == 0.0);
    CHECK(traj.duration() == doctest::Approx(80.0).epsilon(1e-12));

    const Trajectory odd = vfo::simulate(reference_params(), 0.3, 1.0);
    CHECK(odd.size() == 4);  // 0, 0.3, 0.6, 0.9
}

TEST_CASE("trajectory CSV has the documented header and full precision") {
    const Trajectory traj = vfo::simulate(reference_params(), 0.01, 0.05);
    const std::string path = "traj_csv_test.csv";
    vfo::write_trajectory_csv(traj, path);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,xi_r,dxi_r,xi_l,dxi_l");

    std::string line;
    std::size_t rows = 0;
    std::string first;
    while (std::getline(in, line)) {
        if (rows == 0) first = line;
        ++rows;
    }
    CHECK(rows == traj.size());

    std::istringstream fs(first);
    std::string tok;
    std::vector<double> cols;
    while (std::getline(fs, tok, ',')) cols.push_back(std::stod(tok));
    REQUIRE(cols.size() == 5);
    CHECK(cols[0] == 0.0);
    CHECK(cols[1] == traj.states[0].xi_r);  // %.17g round-trips exactly
    CHECK(cols[3] == traj.states[0].xi_l);
    std::remove(path.c_str());
}
