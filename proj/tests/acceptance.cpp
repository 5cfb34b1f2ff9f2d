// Acceptance harness: each criterion is a self-contained check printing one
// [PASS]/[FAIL] line; the exit code is the number of failed criteria.
// Usage: acceptance <1..8|all>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "synth.hpp"
#include "vfo/fit.hpp"
#include "vfo/classify.hpp"
#include "vfo/errors.hpp"
#include "vfo/model.hpp"
#include "vfo/phase.hpp"
#include "vfo/signal.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

vfo::ModelParams params(double a, double b, double d) {
    vfo::ModelParams p;
    p.alpha = a;
    p.beta = b;
    p.delta = d;
    return p;
}

vfo::GlottalFlow model_flow(const vfo::ModelParams& p, double dt, double t_end) {
    const vfo::PhysicalConstants k;
    return vfo::flow_from_displacement(vfo::simulate(p, dt, t_end), k);
}

// 1. adjoint gradients vs central finite differences on random draws from the
//    optimizer projection box; draws whose forward simulation diverges are
//    redrawn; fixed gain, no calibration.
bool criterion_1(std::string& detail) {
    const auto t0 = Clock::now();
    const vfo::PhysicalConstants k;
    const double dt = 0.01, t_end = 40.0, h = 1e-4;

    const vfo::GlottalFlow measured = model_flow(params(0.5, 0.32, 0.0), dt, t_end);
    auto objective_at = [&](const vfo::ModelParams& p) {
        return vfo::residual(vfo::simulate(p, dt, t_end), measured, k).objective;
    };

    std::mt19937_64 rng(0x9E3779B97F4A7C15ull);
    std::uniform_real_distribution<double> da(0.005, 0.995);
    std::uniform_real_distribution<double> db(0.015, 0.995);
    std::uniform_real_distribution<double> dd(0.005, 1.995);

    int accepted = 0, excluded = 0;
    double worst = 0.0;
    for (int attempt = 0; accepted < 20 && attempt < 200; ++attempt) {
        const vfo::ModelParams p = params(da(rng), db(rng), dd(rng));
        try {
            const vfo::Trajectory traj = vfo::simulate(p, dt, t_end);
            const vfo::Residual res = vfo::residual(traj, measured, k);
            const vfo::AdjointTrajectory adj = vfo::solve_adjoint(traj, res, p, k);
            const vfo::Gradient g = vfo::gradients(traj, adj);
            const double adjoint[3] = {g.f_alpha, g.f_beta, g.f_delta};
            for (int c = 0; c < 3; ++c) {
                vfo::ModelParams lo = p, hi = p;
                (c == 0 ? lo.alpha : c == 1 ? lo.beta : lo.delta) -= h;
                (c == 0 ? hi.alpha : c == 1 ? hi.beta : hi.delta) += h;
                const double fd = (objective_at(hi) - objective_at(lo)) / (2.0 * h);
                const double scale = std::max({std::fabs(fd), std::fabs(adjoint[c]), 1e-9});
                worst = std::max(worst, std::fabs(fd - adjoint[c]) / scale);
            }
            ++accepted;
        } catch (const vfo::DivergenceError&) {
            ++excluded;
        }
    }
    const double elapsed = seconds_since(t0);
    detail = std::to_string(accepted) + " draws (" + std::to_string(excluded) +
             " diverged, excluded), max relative gradient error " + fmt("%.2e", worst) +
             ", " + fmt("%.1f", elapsed) + " s";
    return accepted == 20 && worst <= 1e-2 && elapsed <= 120.0;
}

// 2. parameters recovered from flows synthesized at the four reference
//    regimes, starting from perturbed initializations.
bool criterion_2(std::string& detail) {
    const auto t0 = Clock::now();
    struct Anchor {
        vfo::ModelParams truth;
        vfo::ModelParams init;
    };
    const Anchor anchors[] = {
        {params(0.50, 0.32, 0.00), params(0.40, 0.25, 0.10)},
        {params(0.35, 0.32, 0.60), params(0.42, 0.28, 0.45)},
        {params(0.30, 0.32, 0.60), params(0.34, 0.29, 0.52)},
        {params(0.40, 0.32, 0.85), params(0.46, 0.27, 0.70)},
    };

    vfo::OptimizerConfig cfg;
    cfg.quasi_newton = true;
    cfg.max_iters = 2500;
    cfg.grad_tol = 1e-7;
    cfg.ftol = 1e-10;
    cfg.ftol_patience = 20;

    bool ok = true;
    detail.clear();
    for (const Anchor& a : anchors) {
        const vfo::GlottalFlow measured = model_flow(a.truth, cfg.dt, 100.0);
        const vfo::FitResult fit = vfo::estimate(measured, a.init, cfg);
        const double ea = std::fabs(fit.params.alpha - a.truth.alpha);
        const double eb = std::fabs(fit.params.beta - a.truth.beta);
        const double ed = std::fabs(fit.params.delta - a.truth.delta);
        const bool hit = ea <= 0.05 && eb <= 0.05 && ed <= 0.10;
        ok = ok && hit;
        if (!detail.empty()) detail += "; ";
        detail += "(" + fmt("%.2f", a.truth.alpha) + "," + fmt("%.2f", a.truth.beta) + "," +
                  fmt("%.2f", a.truth.delta) + ") err " + fmt("%.3f", ea) + "/" +
                  fmt("%.3f", eb) + "/" + fmt("%.3f", ed) + (hit ? "" : " MISS") + " in " +
                  std::to_string(fit.objective_history.size() - 1) + " iters";
    }
    const double elapsed = seconds_since(t0);
    detail += "; " + fmt("%.1f", elapsed) + " s";
    return ok && elapsed <= 300.0;
}

// 3. symmetric configurations stay symmetric, and the asymmetry gradient
//    vanishes on symmetric fits.
bool criterion_3(std::string& detail) {
    const vfo::Trajectory traj = vfo::simulate(params(0.5, 0.32, 0.0), 0.01, 300.0);
    double worst = 0.0;
    for (const vfo::State& s : traj.states) {
        worst = std::max(worst, std::fabs(s.xi_r - s.xi_l));
        worst = std::max(worst, std::fabs(s.dxi_r - s.dxi_l));
    }

    const vfo::PhysicalConstants k;
    const vfo::Trajectory fit_traj = vfo::simulate(params(0.5, 0.32, 0.0), 0.01, 40.0);
    vfo::GlottalFlow measured = vfo::flow_from_displacement(fit_traj, k);
    for (double& v : measured.samples) v *= 1.1;  // nonzero residual, still symmetric
    const vfo::Residual res = vfo::residual(fit_traj, measured, k);
    const vfo::Gradient g =
        vfo::gradients(fit_traj, vfo::solve_adjoint(fit_traj, res, params(0.5, 0.32, 0.0), k));

    detail = "left/right divergence " + fmt("%.2e", worst) + " over 300 units, |F_delta| = " +
             fmt("%.2e", std::fabs(g.f_delta)) + " with |F_alpha| = " +
             fmt("%.2e", std::fabs(g.f_alpha));
    return worst <= 1e-6 && std::fabs(g.f_delta) <= 1e-12 && std::fabs(g.f_alpha) > 0.0;
}

// 4. the coupling/asymmetry sweep shows one contiguous 1:1 region around the
//    normal-voice corner and loses the 1:1 lock at high asymmetry.
bool criterion_4(std::string& detail) {
    const auto t0 = Clock::now();
    const std::size_t na = 16, nd = 16;
    const vfo::BifurcationGrid grid = vfo::bifurcation_sweep(
        {0.3, 0.7}, {0.0, 1.0}, 0.32, {na, nd}, vfo::SweepSimConfig{}, 0);

    auto is_locked_11 = [&](std::size_t ia, std::size_t id) {
        const auto& cell = grid.cell(ia, id);
        if (!cell || cell->diverged) return false;
        if (cell->kind != vfo::AttractorKind::limit_cycle &&
            cell->kind != vfo::AttractorKind::multi_limit_cycle)
            return false;
        return cell->entrainment.resolved && cell->entrainment.n == 1 &&
               cell->entrainment.m == 1;
    };

    // flood fill (4-connected) from the cell nearest the normal-voice point
    const auto start_ia = static_cast<std::size_t>(
        std::lround((0.5 - 0.3) / (0.4 / static_cast<double>(na - 1))));
    std::set<std::pair<std::size_t, std::size_t>> region;
    if (is_locked_11(start_ia, 0)) {
        std::deque<std::pair<std::size_t, std::size_t>> queue{{start_ia, 0}};
        region.insert(queue.front());
        while (!queue.empty()) {
            const auto [ia, id] = queue.front();
            queue.pop_front();
            const std::ptrdiff_t moves[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            for (const auto& mv : moves) {
                const auto ja = static_cast<std::ptrdiff_t>(ia) + mv[0];
                const auto jd = static_cast<std::ptrdiff_t>(id) + mv[1];
                if (ja < 0 || jd < 0 || ja >= static_cast<std::ptrdiff_t>(na) ||
                    jd >= static_cast<std::ptrdiff_t>(nd))
                    continue;
                const auto cell = std::make_pair(static_cast<std::size_t>(ja),
                                                 static_cast<std::size_t>(jd));
                if (region.count(cell) || !is_locked_11(cell.first, cell.second)) continue;
                region.insert(cell);
                queue.push_back(cell);
            }
        }
    }

    // every low-asymmetry, well-coupled cell must sit inside that region
    std::size_t required = 0, covered = 0;
    for (std::size_t id = 0; id < nd; ++id)
        for (std::size_t ia = 0; ia < na; ++ia) {
            if (grid.delta_axis[id] > 0.25 || grid.alpha_axis[ia] < 0.35) continue;
            ++required;
            if (region.count({ia, id})) ++covered;
        }

    // and high asymmetry must break the lock somewhere: a torus, or an
    // oscillating cell that is not resolved 1:1
    std::size_t broken = 0;
    for (std::size_t id = 0; id < nd; ++id)
        for (std::size_t ia = 0; ia < na; ++ia) {
            if (grid.delta_axis[id] < 0.7) continue;
            const auto& cell = grid.cell(ia, id);
            if (!cell || cell->diverged) continue;
            const bool oscillating = cell->kind != vfo::AttractorKind::fixed_point;
            const bool locked_11 = cell->entrainment.resolved && cell->entrainment.n == 1 &&
                                   cell->entrainment.m == 1;
            if (cell->kind == vfo::AttractorKind::torus || (oscillating && !locked_11))
                ++broken;
        }

    const double elapsed = seconds_since(t0);
    detail = "1:1 region of " + std::to_string(region.size()) + " cells covers " +
             std::to_string(covered) + "/" + std::to_string(required) +
             " low-asymmetry cells, " + std::to_string(broken) +
             " high-asymmetry cells off the 1:1 lock, " + fmt("%.1f", elapsed) + " s";
    return !region.empty() && covered == required && broken >= 1 && elapsed <= 600.0;
}

// 5. attractors of the four reference regimes.
bool criterion_5(std::string& detail) {
    struct Regime {
        vfo::ModelParams p;
        vfo::AttractorKind kind;
        int cycles;  // 0 = not checked
    };
    const Regime regimes[] = {
        {params(0.50, 0.32, 0.00), vfo::AttractorKind::limit_cycle, 1},
        {params(0.35, 0.32, 0.60), vfo::AttractorKind::limit_cycle, 1},
        {params(0.30, 0.32, 0.60), vfo::AttractorKind::multi_limit_cycle, 2},
        {params(0.40, 0.32, 0.85), vfo::AttractorKind::torus, 0},
    };
    bool ok = true;
    detail.clear();
    for (const Regime& r : regimes) {
        const vfo::AttractorReport rep = vfo::classify_attractor(vfo::simulate(r.p, 0.01, 300.0));
        const bool hit = rep.kind == r.kind && (r.cycles == 0 || rep.cycle_count == r.cycles);
        ok = ok && hit;
        if (!detail.empty()) detail += "; ";
        detail += "(" + fmt("%.2f", r.p.alpha) + "," + fmt("%.2f", r.p.delta) + ") -> " +
                  vfo::to_string(rep.kind) + "/" + std::to_string(rep.cycle_count) +
                  (hit ? "" : " expected " + vfo::to_string(r.kind) +
                                  (r.cycles ? "/" + std::to_string(r.cycles) : ""));
    }
    return ok;
}

// 6. the inverse filter recovers a known glottal source from synthetic vowels.
bool criterion_6(std::string& detail) {
    const vfo::PhysicalConstants k;
    double worst = 1.0;
    for (double f0 : {110.0, 130.0, 180.0}) {
        std::vector<double> truth;
        const vfo::SampledSignal vowel = synth::two_formant_vowel(16000.0, f0, 0.6, 700.0, 90.0,
                                                                  1200.0, 110.0, &truth);
        const vfo::GlottalFlow est = vfo::inverse_filter(vowel, vfo::InverseFilterConfig{}, k);
        worst = std::min(worst, synth::ncc_best_lag(est.samples, truth, 200, 2000));
    }
    detail = "min cross-correlation " + fmt("%.3f", worst) + " over 3 vowels";
    return worst >= 0.9;
}

// 7. the reference parameter points map to their pathology labels.
bool criterion_7(std::string& detail) {
    const auto regions = vfo::default_regions();
    auto report = [](vfo::AttractorKind kind, int cycles, int n, int m) {
        vfo::AttractorReport r;
        r.kind = kind;
        r.cycle_count = cycles;
        r.entrainment = {n, m, true};
        return r;
    };
    struct Anchor {
        double delta, alpha;
        vfo::AttractorReport rep;
        const char* label;
    };
    const Anchor anchors[] = {
        {0.30, 0.50, report(vfo::AttractorKind::limit_cycle, 1, 1, 1), "Normal"},
        {0.60, 0.35, report(vfo::AttractorKind::limit_cycle, 1, 1, 1), "Neoplasm"},
        {0.60, 0.30, report(vfo::AttractorKind::multi_limit_cycle, 2, 1, 1), "Phonotrauma"},
        {0.85, 0.40, report(vfo::AttractorKind::torus, 0, 3, 2), "VocalPalsy"},
    };
    bool ok = true;
    detail.clear();
    for (const Anchor& a : anchors) {
        const vfo::Classification cls =
            vfo::classify(params(a.alpha, 0.32, a.delta), a.rep, regions);
        const bool hit = cls.label == a.label;
        ok = ok && hit;
        if (!detail.empty()) detail += "; ";
        detail += "(" + fmt("%.2f", a.delta) + "," + fmt("%.2f", a.alpha) + ") -> " + cls.label +
                  (hit ? "" : std::string(" expected ") + a.label);
    }
    return ok;
}

// 8. integrator convergence order, exact adjoint terminal conditions, and the
//    exact zero-residual fixed point.
bool criterion_8(std::string& detail) {
    const vfo::ModelParams p = params(0.5, 0.32, 0.0);
    const double t_end = 20.0;
    const vfo::Trajectory ref = vfo::simulate(p, 0.01 / 16.0, t_end);
    auto error_at = [&](double dt) {
        const vfo::Trajectory traj = vfo::simulate(p, dt, t_end);
        const auto stride = static_cast<std::size_t>(std::llround(dt / (0.01 / 16.0)));
        double worst = 0.0;
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const vfo::State& a = traj.states[i];
            const vfo::State& b = ref.states[i * stride];
            worst = std::max({worst, std::fabs(a.xi_r - b.xi_r), std::fabs(a.dxi_r - b.dxi_r),
                              std::fabs(a.xi_l - b.xi_l), std::fabs(a.dxi_l - b.dxi_l)});
        }
        return worst;
    };
    const double e_coarse = error_at(0.02), e_fine = error_at(0.01);
    const double ratio = e_coarse / e_fine;

    const vfo::PhysicalConstants k;
    const vfo::ModelParams q = params(0.4, 0.32, 0.3);
    const vfo::Trajectory traj = vfo::simulate(q, 0.01, 40.0);
    const vfo::GlottalFlow measured = model_flow(p, 0.01, 40.0);
    const vfo::AdjointState last =
        vfo::solve_adjoint(traj, vfo::residual(traj, measured, k), q, k).states.back();
    const bool terminal_exact =
        last.lam == 0.0 && last.dlam == 0.0 && last.eta == 0.0 && last.deta == 0.0;

    const vfo::GlottalFlow own = vfo::flow_from_displacement(traj, k);
    const vfo::Gradient g =
        vfo::gradients(traj, vfo::solve_adjoint(traj, vfo::residual(traj, own, k), q, k));
    const bool zero_exact = g.f_alpha == 0.0 && g.f_beta == 0.0 && g.f_delta == 0.0;

    detail = "dt-halving error ratio " + fmt("%.1f", ratio) + ", terminal conditions " +
             (terminal_exact ? "exact" : "VIOLATED") + ", zero-residual gradients " +
             (zero_exact ? "exact zeros" : "NONZERO");
    return ratio >= 8.0 && terminal_exact && zero_exact;
}

}  // namespace

int main(int argc, char** argv) {
    using Criterion = bool (*)(std::string&);
    const Criterion criteria[] = {criterion_1, criterion_2, criterion_3, criterion_4,
                                  criterion_5, criterion_6, criterion_7, criterion_8};

    std::vector<int> which;
    if (argc < 2 || std::string(argv[1]) == "all") {
        for (int i = 1; i <= 8; ++i) which.push_back(i);
    } else {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > 8) {
            std::fprintf(stderr, "usage: %s <1..8|all>\n", argv[0]);
            return 64;
        }
        which.push_back(n);
    }

    int failures = 0;
    for (int n : which) {
        std::string detail;
        bool ok = false;
        try {
            ok = criteria[n - 1](detail);
        } catch (const std::exception& e) {
            detail = std::string("unexpected error: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
