#include "vfo/fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"
#include "vfo/phase.hpp"

#include <json.hpp>

namespace vfo {

double Gradient::max_norm() const {
    return std::max({std::fabs(f_alpha), std::fabs(f_beta), std::fabs(f_delta)});
}

namespace {

double trapz_sq(const std::vector<double>& v, double dt) {
    if (v.size() < 2) return 0.0;
    double acc = 0.5 * (v.front() * v.front() + v.back() * v.back());
    for (std::size_t i = 1; i + 1 < v.size(); ++i) acc += v[i] * v[i];
    return acc * dt;
}

}  // namespace

Residual residual(const Trajectory& traj, const GlottalFlow& measured,
                  const PhysicalConstants& k, double gain) {
    k.validate();
    if (measured.samples.size() != traj.size())
        throw GridMismatchError("measured flow and trajectory grids differ; resample first");
    if (traj.size() < 2) throw DomainError("trajectory too short");
    Residual res;
    res.dt = traj.dt;
    res.values.resize(traj.size());
    const double g = gain * k.midpoint_velocity * k.fold_length;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const State& s = traj.states[i];
        res.values[i] =
            g * (2.0 * k.xi0 + s.xi_l + s.xi_r) - measured.samples[i];
    }
    res.objective = trapz_sq(res.values, traj.dt);
    return res;
}

namespace {

struct AdjointContext {
    double xr, vr, xl, vl, r;
};

struct AdjointDeriv {
    double dlam, ddlam, deta, ddeta;
};

AdjointDeriv adjoint_rhs(const AdjointState& y, const AdjointContext& c, const ModelParams& p,
                         double g, AdjointForm form) {
    AdjointDeriv d;
    d.dlam = y.dlam;
    d.deta = y.deta;
    if (form == AdjointForm::full) {
        d.ddlam = (p.beta * (1.0 + c.xr * c.xr) - p.alpha) * y.dlam - p.alpha * y.deta -
                  (1.0 - 0.5 * p.delta) * y.lam - 2.0 * g * c.r;
        d.ddeta = (p.beta * (1.0 + c.xl * c.xl) - p.alpha) * y.deta - p.alpha * y.dlam -
                  (1.0 + 0.5 * p.delta) * y.eta - 2.0 * g * c.r;
    } else {
        d.ddlam = -(2.0 * p.beta * c.xr * c.vr + 1.0 - 0.5 * p.delta) * y.lam - 2.0 * g * c.r;
        d.ddeta = -(2.0 * p.beta * c.xl * c.vl + 1.0 + 0.5 * p.delta) * y.eta - 2.0 * g * c.r;
    }
    return d;
}

inline AdjointState adj_advance(const AdjointState& y, const AdjointDeriv& d, double h) {
    return AdjointState{y.lam + h * d.dlam, y.dlam + h * d.ddlam, y.eta + h * d.deta,
                        y.deta + h * d.ddeta};
}

}  // namespace

AdjointTrajectory solve_adjoint(const Trajectory& traj, const Residual& res,
                                const ModelParams& p, const PhysicalConstants& k,
                                AdjointForm form, double gain) {
    p.validate();
    k.validate();
    const std::size_t n = traj.size();
    if (res.values.size() != n)
        throw GridMismatchError("residual and trajectory grids differ");
    if (n < 2) throw DomainError("trajectory too short");
    const double dt = traj.dt;
    const double g = gain * k.midpoint_velocity * k.fold_length;

    // accelerations at the grid points, for Hermite velocity midpoints
    std::vector<double> ar(n), al(n);
    for (std::size_t i = 0; i < n; ++i) {
        const StateDerivative d = rhs(traj.states[i], p);
        ar[i] = d.ddxi_r;
        al[i] = d.ddxi_l;
    }
    const auto& st = traj.states;
    const auto& rv = res.values;
    auto r_mid = [&](std::size_t i) {
        // Catmull-Rom midpoint between samples i and i+1, edges clamped
        const double rm1 = rv[i == 0 ? 0 : i - 1];
        const double rp2 = rv[std::min(n - 1, i + 2)];
        return (-rm1 + 9.0 * rv[i] + 9.0 * rv[i + 1] - rp2) / 16.0;
    };

    AdjointTrajectory adj;
    adj.dt = dt;
    adj.states.assign(n, AdjointState{});
    const double h = -dt;
    for (std::size_t i = n - 1; i > 0; --i) {
        const AdjointState& y = adj.states[i];
        const AdjointContext c_hi{st[i].xi_r, st[i].dxi_r, st[i].xi_l, st[i].dxi_l, rv[i]};
        const AdjointContext c_lo{st[i - 1].xi_r, st[i - 1].dxi_r, st[i - 1].xi_l,
                                  st[i - 1].dxi_l, rv[i - 1]};
        const AdjointContext c_mid{
            0.5 * (st[i - 1].xi_r + st[i].xi_r) + dt / 8.0 * (st[i - 1].dxi_r - st[i].dxi_r),
            0.5 * (st[i - 1].dxi_r + st[i].dxi_r) + dt / 8.0 * (ar[i - 1] - ar[i]),
            0.5 * (st[i - 1].xi_l + st[i].xi_l) + dt / 8.0 * (st[i - 1].dxi_l - st[i].dxi_l),
            0.5 * (st[i - 1].dxi_l + st[i].dxi_l) + dt / 8.0 * (al[i - 1] - al[i]),
            r_mid(i - 1)};

        const AdjointDeriv k1 = adjoint_rhs(y, c_hi, p, g, form);
        const AdjointDeriv k2 = adjoint_rhs(adj_advance(y, k1, 0.5 * h), c_mid, p, g, form);
        const AdjointDeriv k3 = adjoint_rhs(adj_advance(y, k2, 0.5 * h), c_mid, p, g, form);
        const AdjointDeriv k4 = adjoint_rhs(adj_advance(y, k3, h), c_lo, p, g, form);
        AdjointState next{
            y.lam + h / 6.0 * (k1.dlam + 2.0 * k2.dlam + 2.0 * k3.dlam + k4.dlam),
            y.dlam + h / 6.0 * (k1.ddlam + 2.0 * k2.ddlam + 2.0 * k3.ddlam + k4.ddlam),
            y.eta + h / 6.0 * (k1.deta + 2.0 * k2.deta + 2.0 * k3.deta + k4.deta),
            y.deta + h / 6.0 * (k1.ddeta + 2.0 * k2.ddeta + 2.0 * k3.ddeta + k4.ddeta)};
        if (!std::isfinite(next.lam) || !std::isfinite(next.dlam) || !std::isfinite(next.eta) ||
            !std::isfinite(next.deta)) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "adjoint diverged at t=%.6g", traj.time(i - 1));
            throw DivergenceError(buf, traj.time(i - 1));
        }
        adj.states[i - 1] = next;
    }

    double amax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const AdjointState& y = adj.states[i];
        const double sum = y.lam + y.eta;
        const double resr = p.beta * (1.0 + st[i].xi_r * st[i].xi_r) * y.lam - p.alpha * sum;
        const double resl = p.beta * (1.0 + st[i].xi_l * st[i].xi_l) * y.eta - p.alpha * sum;
        amax = std::max({amax, std::fabs(resr), std::fabs(resl)});
    }
    adj.algebraic_residual_max = amax;
    return adj;
}

Gradient gradients(const Trajectory& traj, const AdjointTrajectory& adj) {
    const std::size_t n = traj.size();
    if (adj.states.size() != n)
        throw GridMismatchError("adjoint and trajectory grids differ");
    if (n < 2) throw DomainError("trajectory too short");
    double ga = 0.0, gb = 0.0, gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const State& s = traj.states[i];
        const AdjointState& y = adj.states[i];
        const double wa = -(s.dxi_r + s.dxi_l) * (y.lam + y.eta);
        const double wb = (1.0 + s.xi_r * s.xi_r) * s.dxi_r * y.lam +
                          (1.0 + s.xi_l * s.xi_l) * s.dxi_l * y.eta;
        const double wd = 0.5 * (s.xi_l * y.eta - s.xi_r * y.lam);
        const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        ga += w * wa;
        gb += w * wb;
        gd += w * wd;
    }
    return Gradient{ga * traj.dt, gb * traj.dt, gd * traj.dt};
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Vec3 matvec(const Mat3& m, const Vec3& v) {
    Vec3 out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[static_cast<std::size_t>(i)] += m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j)];
    return out;
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

struct EvalResult {
    double objective = std::numeric_limits<double>::infinity();
    double gain = 1.0;
    Trajectory traj;
    Residual windowed;  // residual zeroed outside the fit window
    bool ok = false;
};

struct Problem {
    std::vector<double> u;       // measured flow on the model grid
    std::vector<double> weight;  // 1 inside the fit window
    double dt;
    double t_end;
    const OptimizerConfig* cfg;

    EvalResult evaluate(const Vec3& th) const {
        EvalResult ev;
        const ModelParams p{th[0], th[1], th[2], cfg->c_r, cfg->c_l};
        try {
            ev.traj = simulate(p, dt, t_end);
        } catch (const DivergenceError&) {
            return ev;  // infinite objective; line search will shrink
        }
        const std::size_t n = ev.traj.size();
        const double g = cfg->constants.midpoint_velocity * cfg->constants.fold_length;
        std::vector<double> umod(n);
        for (std::size_t i = 0; i < n; ++i)
            umod[i] = g * (2.0 * cfg->constants.xi0 + ev.traj.states[i].xi_l +
                           ev.traj.states[i].xi_r);
        double gain = 1.0;
        if (cfg->calibrate_gain) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                num += weight[i] * umod[i] * u[i];
                den += weight[i] * umod[i] * umod[i];
            }
            gain = (den > 1e-30) ? num / den : 1.0;
        }
        ev.gain = gain;
        ev.windowed.dt = dt;
        ev.windowed.values.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            ev.windowed.values[i] = weight[i] * (gain * umod[i] - u[i]);
        ev.windowed.objective = trapz_sq(ev.windowed.values, dt);
        ev.objective = ev.windowed.objective;
        ev.ok = true;
        return ev;
    }
};

}  // namespace

FitResult estimate(const GlottalFlow& measured, const ModelParams& init,
                   const OptimizerConfig& cfg) {
    init.validate();
    cfg.constants.validate();
    if (!(cfg.dt > 0.0) || !(cfg.fit_horizon > cfg.dt))
        throw DomainError("optimizer dt/fit_horizon invalid");
    if (!(cfg.discard_fraction >= 0.0 && cfg.discard_fraction < 1.0))
        throw DomainError("discard_fraction must be in [0, 1)");
    if (!(cfg.tau_alpha > 0.0 && cfg.tau_beta > 0.0 && cfg.tau_delta > 0.0))
        throw DomainError("step sizes must be positive");
    if (measured.samples.size() < 2 || !(measured.sample_rate > 0.0))
        throw DataError("measured flow too short");

    FitResult fit;

    // map the measured grid onto the dimensionless model grid
    Problem prob;
    prob.dt = cfg.dt;
    prob.cfg = &cfg;
    // linear interpolation that snaps to exact grid hits, so identical grids
    // reproduce the input bit-for-bit (the zero-residual fixed point is exact)
    auto sample_at = [&measured](double pos) {
        const double nearest = std::round(pos);
        if (std::fabs(pos - nearest) < 1e-9 && nearest >= 0.0 &&
            nearest < static_cast<double>(measured.samples.size()))
            return measured.samples[static_cast<std::size_t>(nearest)];
        const auto j = static_cast<std::size_t>(
            std::clamp(pos, 0.0, static_cast<double>(measured.samples.size() - 2)));
        const double frac = pos - static_cast<double>(j);
        return measured.samples[j] + frac * (measured.samples[j + 1] - measured.samples[j]);
    };

    if (measured.dimensionless) {
        fit.time_scale = 1.0;
        const double dt_in = 1.0 / measured.sample_rate;
        const double duration = dt_in * static_cast<double>(measured.samples.size() - 1);
        const double t_end = std::min(cfg.fit_horizon, duration);
        const auto n = static_cast<std::size_t>(std::floor(t_end / cfg.dt + 1e-6)) + 1;
        if (n < 32) throw DataError("measured flow too short for the fit horizon");
        prob.u.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            prob.u[i] = sample_at(static_cast<double>(i) * cfg.dt / dt_in);
        prob.t_end = static_cast<double>(n - 1) * cfg.dt;
    } else {
        SampledSignal sig{measured.sample_rate, measured.samples, "measured flow"};
        const double f0 = estimate_f0(sig);  // NoVoicingError propagates

        // observed limit-cycle period of the model at the initial iterate sets
        // the dimensionless-to-seconds scale; the linearized period is the
        // fallback when the initial iterate does not oscillate
        double model_period = 2.0 * std::numbers::pi;
        try {
            const Trajectory probe =
                simulate(ModelParams{init.alpha, init.beta, init.delta, cfg.c_r, cfg.c_l},
                         cfg.dt, 200.0);
            const auto cr = poincare_crossings(probe, Oscillator::right, 0.5);
            if (cr.size() >= 3)
                model_period = (cr.back().t - cr.front().t) / static_cast<double>(cr.size() - 1);
        } catch (const DivergenceError&) {
        }
        fit.time_scale = model_period * f0;

        const double duration_s =
            static_cast<double>(measured.samples.size() - 1) / measured.sample_rate;
        const double t_end = std::min(cfg.fit_horizon, duration_s * fit.time_scale);
        const auto n = static_cast<std::size_t>(std::floor(t_end / cfg.dt + 1e-6)) + 1;
        if (n < 32) throw DataError("measured flow too short for the fit horizon");
        prob.u.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            prob.u[i] = sample_at((static_cast<double>(i) * cfg.dt / fit.time_scale) *
                                  measured.sample_rate);
        prob.t_end = static_cast<double>(n - 1) * cfg.dt;
    }

    // fit window: discard the leading transient, then trim to an integer
    // number of periods of the measured flow so the phase windowing is unbiased
    const std::size_t n = prob.u.size();
    const auto i0 = static_cast<std::size_t>(
        std::llround(cfg.discard_fraction * static_cast<double>(n - 1)));
    std::size_t i1 = n - 1;
    {
        std::vector<double> tail(prob.u.begin() + static_cast<std::ptrdiff_t>(i0), prob.u.end());
        const double max_lag = static_cast<double>(tail.size()) / 3.0;
        if (const auto period = autocorr_period(tail, 8.0, max_lag, 0.3)) {
            const auto whole = static_cast<std::size_t>(
                std::floor(static_cast<double>(n - 1 - i0) / *period));
            if (whole >= 1)
                i1 = i0 + static_cast<std::size_t>(
                              std::llround(static_cast<double>(whole) * *period));
        }
    }
    prob.weight.assign(n, 0.0);
    for (std::size_t i = i0; i <= i1 && i < n; ++i) prob.weight[i] = 1.0;

    const Vec3 lo{cfg.alpha_min, cfg.beta_min, cfg.delta_min};
    const Vec3 hi{cfg.alpha_max, cfg.beta_max, cfg.delta_max};
    auto project = [&](Vec3 v) {
        for (int j = 0; j < 3; ++j)
            v[static_cast<std::size_t>(j)] = std::clamp(v[static_cast<std::size_t>(j)],
                                                        lo[static_cast<std::size_t>(j)],
                                                        hi[static_cast<std::size_t>(j)]);
        return v;
    };

    Vec3 theta = project(Vec3{init.alpha, init.beta, init.delta});
    EvalResult cur = prob.evaluate(theta);
    if (!cur.ok)
        throw DivergenceError("forward simulation diverged at the initial iterate", 0.0);
    fit.objective_history.push_back(cur.objective);

    const Mat3 h0{{{cfg.tau_alpha, 0.0, 0.0}, {0.0, cfg.tau_beta, 0.0}, {0.0, 0.0, cfg.tau_delta}}};
    Mat3 hmat = h0;
    bool have_prev = false;
    Vec3 prev_theta{}, prev_grad{};
    double ls_scale = 1.0;

    fit.converged = false;
    fit.reason = "max-iterations";
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const AdjointTrajectory adj = solve_adjoint(
            cur.traj, cur.windowed, ModelParams{theta[0], theta[1], theta[2], cfg.c_r, cfg.c_l},
            cfg.constants, cfg.adjoint_form, cur.gain);
        const Gradient grad = gradients(cur.traj, adj);
        const Vec3 g{grad.f_alpha, grad.f_beta, grad.f_delta};
        fit.gradient_norms.push_back(grad.max_norm());
        fit.algebraic_residual_max = adj.algebraic_residual_max;

        if (grad.max_norm() < cfg.grad_tol) {
            fit.converged = true;
            fit.reason = "gradient-tolerance";
            break;
        }

        if (cfg.quasi_newton) {
            if (have_prev) {
                Vec3 s, y;
                for (int j = 0; j < 3; ++j) {
                    s[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)] - prev_theta[static_cast<std::size_t>(j)];
                    y[static_cast<std::size_t>(j)] = g[static_cast<std::size_t>(j)] - prev_grad[static_cast<std::size_t>(j)];
                }
                const double sy = dot(s, y);
                if (sy > 1e-14) {
                    const double rho = 1.0 / sy;
                    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
                    Mat3 a{};
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j)
                            a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                                (i == j ? 1.0 : 0.0) - rho * s[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)];
                    Mat3 ah{};
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j)
                            for (int k = 0; k < 3; ++k)
                                ah[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                                    a[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * hmat[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
                    Mat3 nh{};
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            double acc = rho * s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(j)];
                            for (int k = 0; k < 3; ++k)
                                acc += ah[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                            nh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
                        }
                    hmat = nh;
                }
            }
            prev_theta = theta;
            prev_grad = g;
            have_prev = true;
        }

        Vec3 dir = cfg.quasi_newton ? matvec(hmat, g)
                                    : Vec3{cfg.tau_alpha * g[0], cfg.tau_beta * g[1],
                                           cfg.tau_delta * g[2]};
        if (cfg.quasi_newton && !(dot(dir, g) > 0.0)) {
            hmat = h0;
            dir = matvec(hmat, g);
        }

        bool accepted = false;
        double scale = ls_scale;
        for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
            Vec3 trial = theta;
            for (int j = 0; j < 3; ++j)
                trial[static_cast<std::size_t>(j)] -= scale * dir[static_cast<std::size_t>(j)];
            trial = project(trial);
            const EvalResult ev = prob.evaluate(trial);
            if (ev.ok && ev.objective < cur.objective) {
                theta = trial;
                cur = ev;
                fit.objective_history.push_back(cur.objective);
                ls_scale = std::min(scale * 2.0, 1e6);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) {
            fit.reason = "line-search-exhausted";
            break;
        }

        const auto hist = fit.objective_history.size();
        if (static_cast<int>(hist) > cfg.ftol_patience) {
            const double f_old = fit.objective_history[hist - 1 - static_cast<std::size_t>(cfg.ftol_patience)];
            const double f_new = fit.objective_history[hist - 1];
            if ((f_old - f_new) / std::max(std::fabs(f_old), 1e-30) < cfg.ftol) {
                fit.converged = true;
                fit.reason = "objective-stall";
                break;
            }
        }
    }

    fit.params = ModelParams{theta[0], theta[1], theta[2], cfg.c_r, cfg.c_l};
    fit.gain = cur.gain;
    if (fit.gradient_norms.empty()) {
        const AdjointTrajectory adj =
            solve_adjoint(cur.traj, cur.windowed, fit.params, cfg.constants, cfg.adjoint_form,
                          cur.gain);
        fit.gradient_norms.push_back(gradients(cur.traj, adj).max_norm());
        fit.algebraic_residual_max = adj.algebraic_residual_max;
    }
    return fit;
}

void write_fit_json(const FitResult& fit, const std::string& path) {
    nlohmann::json j;
    j["alpha"] = fit.params.alpha;
    j["beta"] = fit.params.beta;
    j["delta"] = fit.params.delta;
    j["objective_history"] = fit.objective_history;
    j["gradient_norms"] = fit.gradient_norms;
    j["converged"] = fit.converged;
    j["reason"] = fit.reason;
    j["time_scale"] = fit.time_scale;
    j["gain"] = fit.gain;
    j["algebraic_residual_max"] = fit.algebraic_residual_max;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

void write_fit_trace_csv(const FitResult& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "iter,objective,gradient_norm\n";
    const std::size_t rows = std::max(fit.objective_history.size(), fit.gradient_norms.size());
    for (std::size_t i = 0; i < rows; ++i) {
        out << i << ',';
        if (i < fit.objective_history.size()) out << fmt_g17(fit.objective_history[i]);
        out << ',';
        if (i < fit.gradient_norms.size()) out << fmt_g17(fit.gradient_norms[i]);
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}
