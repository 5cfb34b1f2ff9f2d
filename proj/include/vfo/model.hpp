#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vfo {

struct ModelParams {
    double alpha = 0.5;
    double beta = 0.32;
    double delta = 0.0;
    double c_r = 0.1;
    double c_l = 0.1;

    // throws DomainError on alpha < 0, beta <= 0, delta outside [0, 2],
    // or any non-finite field
    void validate() const;
};

struct State {
    double xi_r = 0.0;
    double dxi_r = 0.0;
    double xi_l = 0.0;
    double dxi_l = 0.0;

    bool finite() const;
};

struct StateDerivative {
    double dxi_r = 0.0;
    double ddxi_r = 0.0;
    double dxi_l = 0.0;
    double ddxi_l = 0.0;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<State> states;

    std::size_t size() const { return states.size(); }
    double time(std::size_t i) const { return static_cast<double>(i) * dt; }
    double duration() const { return states.empty() ? 0.0 : time(states.size() - 1); }
};

StateDerivative rhs(const State& s, const ModelParams& p);

// fixed-step RK4 from the params' initial displacements with zero velocity;
// rejects the all-zero initial condition (equilibrium, nothing to simulate)
Trajectory simulate(const ModelParams& p, double dt = 0.01, double t_end = 300.0);

// same integrator from an arbitrary initial state
Trajectory simulate_from(const State& initial, const ModelParams& p, double dt, double t_end);

// header t,xi_r,dxi_r,xi_l,dxi_l with 17 significant digits
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}
