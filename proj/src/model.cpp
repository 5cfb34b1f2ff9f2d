#include "vfo/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"

namespace vfo {

namespace {

constexpr double kBlowupLimit = 1e6;

bool blown(const State& s) {
    return !s.finite() || std::fabs(s.xi_r) > kBlowupLimit || std::fabs(s.dxi_r) > kBlowupLimit ||
           std::fabs(s.xi_l) > kBlowupLimit || std::fabs(s.dxi_l) > kBlowupLimit;
}

}  // namespace

void ModelParams::validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(delta) ||
        !std::isfinite(c_r) || !std::isfinite(c_l))
        throw DomainError("model parameters must be finite");
    if (alpha < 0.0) throw DomainError("alpha must be >= 0");
    if (beta <= 0.0) throw DomainError("beta must be > 0");
    if (delta < 0.0 || delta > 2.0) throw DomainError("delta must be in [0, 2]");
}

bool State::finite() const {
    return std::isfinite(xi_r) && std::isfinite(dxi_r) && std::isfinite(xi_l) &&
           std::isfinite(dxi_l);
}

StateDerivative rhs(const State& s, const ModelParams& p) {
    if (!s.finite()) throw DomainError("rhs: non-finite state");
    const double coupling = p.alpha * (s.dxi_r + s.dxi_l);
    StateDerivative d;
    d.dxi_r = s.dxi_r;
    d.ddxi_r = coupling - p.beta * (1.0 + s.xi_r * s.xi_r) * s.dxi_r - s.xi_r +
               0.5 * p.delta * s.xi_r;
    d.dxi_l = s.dxi_l;
    d.ddxi_l = coupling - p.beta * (1.0 + s.xi_l * s.xi_l) * s.dxi_l - s.xi_l -
               0.5 * p.delta * s.xi_l;
    return d;
}

namespace {

// unchecked rhs for the integrator inner loop
inline StateDerivative deriv(const State& s, const ModelParams& p) {
    const double coupling = p.alpha * (s.dxi_r + s.dxi_l);
    StateDerivative d;
    d.dxi_r = s.dxi_r;
    d.ddxi_r = coupling - p.beta * (1.0 + s.xi_r * s.xi_r) * s.dxi_r - s.xi_r +
               0.5 * p.delta * s.xi_r;
    d.dxi_l = s.dxi_l;
    d.ddxi_l = coupling - p.beta * (1.0 + s.xi_l * s.xi_l) * s.dxi_l - s.xi_l -
               0.5 * p.delta * s.xi_l;
    return d;
}

inline State advance(const State& s, const StateDerivative& d, double h) {
    return State{s.xi_r + h * d.dxi_r, s.dxi_r + h * d.ddxi_r, s.xi_l + h * d.dxi_l,
                 s.dxi_l + h * d.ddxi_l};
}

}  // namespace

Trajectory simulate_from(const State& initial, const ModelParams& p, double dt, double t_end) {
    p.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("dt must be > 0");
    if (!(t_end >= dt) || !std::isfinite(t_end)) throw DomainError("t_end must be >= dt");
    if (!initial.finite()) throw DomainError("initial state must be finite");

    // the additive margin absorbs IEEE quotient error (e.g. 80/0.01 = 7999.999...)
    const auto steps = static_cast<std::size_t>(std::floor(t_end / dt + 1e-6));
    Trajectory traj;
    traj.dt = dt;
    traj.states.reserve(steps + 1);
    traj.states.push_back(initial);

    State s = initial;
    for (std::size_t i = 0; i < steps; ++i) {
        const StateDerivative k1 = deriv(s, p);
        const StateDerivative k2 = deriv(advance(s, k1, 0.5 * dt), p);
        const StateDerivative k3 = deriv(advance(s, k2, 0.5 * dt), p);
        const StateDerivative k4 = deriv(advance(s, k3, dt), p);
        s = State{
            s.xi_r + dt / 6.0 * (k1.dxi_r + 2.0 * k2.dxi_r + 2.0 * k3.dxi_r + k4.dxi_r),
            s.dxi_r + dt / 6.0 * (k1.ddxi_r + 2.0 * k2.ddxi_r + 2.0 * k3.ddxi_r + k4.ddxi_r),
            s.xi_l + dt / 6.0 * (k1.dxi_l + 2.0 * k2.dxi_l + 2.0 * k3.dxi_l + k4.dxi_l),
            s.dxi_l + dt / 6.0 * (k1.ddxi_l + 2.0 * k2.ddxi_l + 2.0 * k3.ddxi_l + k4.ddxi_l)};
        if (blown(s)) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "simulation diverged at t=%.6g",
                          static_cast<double>(i + 1) * dt);
            throw DivergenceError(buf, static_cast<double>(i + 1) * dt);
        }
        traj.states.push_back(s);
    }
    return traj;
}

Trajectory simulate(const ModelParams& p, double dt, double t_end) {
    if (p.c_r == 0.0 && p.c_l == 0.0)
        throw DomainError("initial displacements (c_r, c_l) must not both be zero");
    return simulate_from(State{p.c_r, 0.0, p.c_l, 0.0}, p, dt, t_end);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "t,xi_r,dxi_r,xi_l,dxi_l\n";
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const State& s = traj.states[i];
        out << fmt_g17(traj.time(i)) << ',' << fmt_g17(s.xi_r) << ',' << fmt_g17(s.dxi_r) << ','
            << fmt_g17(s.xi_l) << ',' << fmt_g17(s.dxi_l) << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}
