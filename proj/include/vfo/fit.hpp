#pragma once

#include <string>
#include <vector>

#include "vfo/model.hpp"
#include "vfo/signal.hpp"

namespace vfo {

struct Residual {
    double dt = 0.0;
    std::vector<double> values;  // R(t) per grid point
    double objective = 0.0;      // trapezoidal integral of R^2
};

struct AdjointState {
    double lam = 0.0;
    double dlam = 0.0;
    double eta = 0.0;
    double deta = 0.0;
};

struct AdjointTrajectory {
    double dt = 0.0;
    std::vector<AdjointState> states;
    // max pointwise violation of the stationarity relations
    // beta(1+xi^2)*mult - alpha(lam+eta); diagnostic only, never enforced
    double algebraic_residual_max = 0.0;
};

// `full` includes the first-order multiplier terms that exact integration by
// parts of the Lagrangian produces; `undamped` drops them, keeping only the
// displacement-coefficient form of the adjoint pair.  Gradient checks pass
// only with `full`; `undamped` stays available for comparison runs.
enum class AdjointForm { full, undamped };

struct Gradient {
    double f_alpha = 0.0;
    double f_beta = 0.0;
    double f_delta = 0.0;
    double max_norm() const;
};

struct OptimizerConfig {
    double tau_alpha = 1e-3;
    double tau_beta = 1e-3;
    double tau_delta = 1e-3;
    int max_iters = 500;
    double grad_tol = 1e-5;
    double ftol = 1e-6;
    int ftol_patience = 5;
    int max_halvings = 10;
    bool quasi_newton = false;
    AdjointForm adjoint_form = AdjointForm::full;

    double dt = 0.01;
    double fit_horizon = 80.0;      // dimensionless; capped by the available signal
    double discard_fraction = 0.25; // leading transient excluded from the objective
    double c_r = 0.1;
    double c_l = 0.1;
    bool calibrate_gain = true;

    double alpha_min = 0.0, alpha_max = 1.0;
    double beta_min = 0.01, beta_max = 1.0;
    double delta_min = 0.0, delta_max = 2.0;

    PhysicalConstants constants;
};

struct FitResult {
    ModelParams params;
    std::vector<double> objective_history;
    std::vector<double> gradient_norms;
    bool converged = false;
    std::string reason;
    double time_scale = 1.0;  // model time units per second of signal
    double gain = 1.0;        // least-squares amplitude calibration
    double algebraic_residual_max = 0.0;

    double objective() const { return objective_history.back(); }
};

// R = gain * vc * d * (2*xi0 + xi_l + xi_r) - u_meas on the trajectory grid
Residual residual(const Trajectory& traj, const GlottalFlow& measured,
                  const PhysicalConstants& k, double gain = 1.0);

// integrates the adjoint pair backward from T with zero terminal values; the
// forcing uses the same gain-scaled flow factor as the residual
AdjointTrajectory solve_adjoint(const Trajectory& traj, const Residual& res,
                                const ModelParams& p, const PhysicalConstants& k,
                                AdjointForm form = AdjointForm::full, double gain = 1.0);

// trapezoidal quadrature of the three objective-gradient integrands
Gradient gradients(const Trajectory& traj, const AdjointTrajectory& adj);

// full fitting loop: time alignment (measured signals), per-iteration gain
// calibration, simulate / adjoint / gradient steps with projected updates
FitResult estimate(const GlottalFlow& measured, const ModelParams& init,
                   const OptimizerConfig& cfg);

void write_fit_json(const FitResult& fit, const std::string& path);
void write_fit_trace_csv(const FitResult& fit, const std::string& path);

}
