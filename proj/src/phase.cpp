#include "vfo/phase.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"

namespace vfo {

std::string to_string(AttractorKind k) {
    switch (k) {
        case AttractorKind::fixed_point: return "fixed-point";
        case AttractorKind::limit_cycle: return "limit-cycle";
        case AttractorKind::multi_limit_cycle: return "multi-limit-cycle";
        case AttractorKind::torus: return "torus";
        case AttractorKind::unclassified: return "unclassified";
    }
    return "unclassified";
}

std::optional<AttractorKind> attractor_kind_from_string(const std::string& s) {
    if (s == "fixed-point") return AttractorKind::fixed_point;
    if (s == "limit-cycle") return AttractorKind::limit_cycle;
    if (s == "multi-limit-cycle") return AttractorKind::multi_limit_cycle;
    if (s == "torus") return AttractorKind::torus;
    if (s == "unclassified") return AttractorKind::unclassified;
    return std::nullopt;
}

std::vector<PoincareCrossing> poincare_crossings(const Trajectory& traj, Oscillator osc,
                                                 double settle_fraction,
                                                 CrossingDirection direction) {
    if (!(settle_fraction >= 0.0 && settle_fraction < 1.0))
        throw DomainError("settle_fraction must be in [0, 1)");
    const std::size_t n = traj.size();
    if (n < 2) throw DomainError("trajectory too short for crossing analysis");
    const auto i0 = static_cast<std::size_t>(settle_fraction * static_cast<double>(n));
    if (i0 + 1 >= n) throw DomainError("settle window leaves no samples");

    std::vector<PoincareCrossing> out;
    for (std::size_t i = i0; i + 1 < n; ++i) {
        const State& a = traj.states[i];
        const State& b = traj.states[i + 1];
        const double va = (osc == Oscillator::right) ? a.dxi_r : a.dxi_l;
        const double vb = (osc == Oscillator::right) ? b.dxi_r : b.dxi_l;
        const bool hit = (direction == CrossingDirection::up) ? (va < 0.0 && vb >= 0.0)
                                                              : (va > 0.0 && vb <= 0.0);
        if (!hit) continue;
        const double frac = va / (va - vb);
        const double xa = (osc == Oscillator::right) ? a.xi_r : a.xi_l;
        const double xb = (osc == Oscillator::right) ? b.xi_r : b.xi_l;
        out.push_back(PoincareCrossing{(static_cast<double>(i) + frac) * traj.dt,
                                       xa + frac * (xb - xa), osc});
    }
    return out;
}

namespace {

// greedy diameter clustering of return values: sorted points join a cluster
// while they stay within tol of the cluster's smallest member
struct Clustering {
    int count = 0;
    std::vector<int> labels;  // in time order
};

Clustering cluster_returns(const std::vector<double>& values, double tol) {
    Clustering c;
    const std::size_t n = values.size();
    c.labels.assign(n, 0);
    if (n == 0) return c;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    int label = 0;
    double start = values[order[0]];
    for (std::size_t k = 0; k < n; ++k) {
        const double v = values[order[k]];
        if (v - start > tol) {
            ++label;
            start = v;
        }
        c.labels[order[k]] = label;
    }
    c.count = label + 1;
    return c;
}

bool cyclic_revisit(const std::vector<int>& labels, int k) {
    if (k <= 0) return false;
    const std::size_t n = labels.size();
    if (n < 2 * static_cast<std::size_t>(k)) return false;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) < n; ++i)
        if (labels[i] != labels[i + static_cast<std::size_t>(k)]) return false;
    return true;
}

std::vector<double> crossing_values(const std::vector<PoincareCrossing>& cs) {
    std::vector<double> v;
    v.reserve(cs.size());
    for (const auto& c : cs) v.push_back(c.value);
    return v;
}

std::vector<double> crossing_values_until(const std::vector<PoincareCrossing>& cs, double t_max) {
    std::vector<double> v;
    for (const auto& c : cs)
        if (c.t <= t_max) v.push_back(c.value);
    return v;
}

// loop-rate ratio from the mean crossing period of each side, snapped to the
// best rational with both components at most 16; immune to which loop the
// analysis window happens to open or close on
EntrainmentRatio count_ratio(const std::vector<PoincareCrossing>& right,
                             const std::vector<PoincareCrossing>& left) {
    EntrainmentRatio r;
    if (right.size() < 2 || left.size() < 2) return r;
    const double pr = (right.back().t - right.front().t) / static_cast<double>(right.size() - 1);
    const double pl = (left.back().t - left.front().t) / static_cast<double>(left.size() - 1);
    if (!(pr > 0.0) || !(pl > 0.0)) return r;
    const double rho = pl / pr;  // right loops per left loop

    int best_n = 0, best_m = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= 16; ++m) {
        const int n = static_cast<int>(std::lround(rho * m));
        if (n < 1 || n > 16 || std::gcd(n, m) != 1) continue;
        const double err = std::fabs(rho - static_cast<double>(n) / m);
        if (err < best_err) {
            best_err = err;
            best_n = n;
            best_m = m;
        }
    }
    if (best_n == 0) return r;
    r.n = best_n;
    r.m = best_m;
    r.resolved = best_err <= 1e-2 * rho;
    return r;
}

struct SideAnalysis {
    int k_full = 0;
    int k_half = 0;
    bool cyclic = false;
    std::size_t crossings = 0;
};

SideAnalysis analyze_side(const std::vector<PoincareCrossing>& cs, double t_half, double tol) {
    SideAnalysis s;
    s.crossings = cs.size();
    if (cs.empty()) return s;
    const Clustering full = cluster_returns(crossing_values(cs), tol);
    const Clustering half = cluster_returns(crossing_values_until(cs, t_half), tol);
    s.k_full = full.count;
    s.k_half = half.count;
    s.cyclic = cyclic_revisit(full.labels, full.count);
    return s;
}

bool locked_sides(const SideAnalysis& r, const SideAnalysis& l) {
    return r.cyclic && l.cyclic && r.k_full == r.k_half && l.k_full == l.k_half &&
           r.k_full <= 16 && l.k_full <= 16 && r.k_full >= 1 && l.k_full >= 1;
}

}  // namespace

EntrainmentRatio entrainment_ratio(const Trajectory& traj, double settle_fraction) {
    const auto right = poincare_crossings(traj, Oscillator::right, settle_fraction);
    const auto left = poincare_crossings(traj, Oscillator::left, settle_fraction);
    if (right.size() < 2 || left.size() < 2)
        throw EntrainmentError("not enough crossings to determine entrainment");
    EntrainmentRatio ratio = count_ratio(right, left);

    const auto i0 = static_cast<std::size_t>(settle_fraction * static_cast<double>(traj.size()));
    const double t0 = traj.time(i0);
    const double t_half = t0 + 0.5 * (traj.duration() - t0);
    const SideAnalysis ar = analyze_side(right, t_half, 1e-2);
    const SideAnalysis al = analyze_side(left, t_half, 1e-2);
    ratio.resolved = ratio.resolved && locked_sides(ar, al);
    return ratio;
}

AttractorReport classify_attractor(const Trajectory& traj, double settle_fraction,
                                   double cluster_tol) {
    if (!(cluster_tol > 0.0)) throw DomainError("cluster_tol must be > 0");
    for (const auto& s : traj.states)
        if (!s.finite()) throw DivergenceError("trajectory contains non-finite states", 0.0);

    const auto right = poincare_crossings(traj, Oscillator::right, settle_fraction);
    const auto left = poincare_crossings(traj, Oscillator::left, settle_fraction);

    AttractorReport rep;

    const std::size_t n = traj.size();
    const auto i0 = static_cast<std::size_t>(settle_fraction * static_cast<double>(n));
    const std::size_t quarter = std::max<std::size_t>(1, (n - i0) / 4);
    double amp_first = 0.0, amp_last = 0.0;
    for (std::size_t i = i0; i < std::min(n, i0 + quarter); ++i) {
        amp_first = std::max(amp_first, std::fabs(traj.states[i].xi_r));
        amp_first = std::max(amp_first, std::fabs(traj.states[i].xi_l));
    }
    for (std::size_t i = n - quarter; i < n; ++i) {
        amp_last = std::max(amp_last, std::fabs(traj.states[i].xi_r));
        amp_last = std::max(amp_last, std::fabs(traj.states[i].xi_l));
    }

    if (right.empty() && left.empty()) {
        rep.kind = AttractorKind::fixed_point;
        return rep;
    }
    if (amp_last < 1e-3 || (amp_last < 0.05 && amp_last < 0.6 * amp_first)) {
        rep.kind = AttractorKind::fixed_point;
        return rep;
    }

    const double t0 = traj.time(i0);
    const double t_half = t0 + 0.5 * (traj.duration() - t0);
    const SideAnalysis ar = analyze_side(right, t_half, cluster_tol);
    const SideAnalysis al = analyze_side(left, t_half, cluster_tol);
    rep.clusters_right = ar.k_full;
    rep.clusters_left = al.k_full;
    rep.entrainment = count_ratio(right, left);

    if (right.empty() || left.empty()) {
        rep.kind = AttractorKind::unclassified;
        rep.entrainment.resolved = false;
        return rep;
    }

    const bool enough = ar.crossings >= 2 * static_cast<std::size_t>(ar.k_full) + 2 &&
                        al.crossings >= 2 * static_cast<std::size_t>(al.k_full) + 2;
    if (enough && locked_sides(ar, al)) {
        const int cycles = std::max(ar.k_full, al.k_full);
        rep.kind = (cycles == 1) ? AttractorKind::limit_cycle : AttractorKind::multi_limit_cycle;
        rep.cycle_count = cycles;
        return rep;
    }

    rep.entrainment.resolved = false;
    if (ar.k_full > 16 || al.k_full > 16 || ar.k_full > ar.k_half || al.k_full > al.k_half) {
        rep.kind = AttractorKind::torus;
        return rep;
    }
    rep.kind = AttractorKind::unclassified;
    return rep;
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

}  // namespace

BifurcationGrid bifurcation_sweep(
    std::pair<double, double> alpha_range, std::pair<double, double> delta_range, double beta,
    std::pair<std::size_t, std::size_t> grid_shape, const SweepSimConfig& sim, unsigned workers,
    const std::function<void(std::size_t, const AttractorReport&)>& on_cell,
    const std::vector<std::optional<AttractorReport>>* seed, std::size_t cell_limit) {
    const auto [na, nd] = grid_shape;
    if (na < 2 || nd < 2) throw DomainError("bifurcation grid must be at least 2x2");
    for (double a : {alpha_range.first, alpha_range.second})
        for (double d : {delta_range.first, delta_range.second})
            ModelParams{a, beta, d, sim.c_r, sim.c_l}.validate();

    BifurcationGrid grid;
    grid.alpha_axis = linspace(alpha_range.first, alpha_range.second, na);
    grid.delta_axis = linspace(delta_range.first, delta_range.second, nd);
    grid.cells.assign(na * nd, std::nullopt);
    if (seed) {
        if (seed->size() != grid.cells.size())
            throw GridMismatchError("seed size does not match grid shape");
        grid.cells = *seed;
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < grid.cells.size(); ++i)
        if (!grid.cells[i]) todo.push_back(i);
    if (cell_limit > 0 && todo.size() > cell_limit) todo.resize(cell_limit);

    std::atomic<std::size_t> next{0};
    std::mutex cb_mutex;
    auto work = [&]() {
        for (;;) {
            const std::size_t q = next.fetch_add(1);
            if (q >= todo.size()) return;
            const std::size_t idx = todo[q];
            const std::size_t ia = idx % na;
            const std::size_t id = idx / na;
            const ModelParams p{grid.alpha_axis[ia], beta, grid.delta_axis[id], sim.c_r, sim.c_l};
            AttractorReport rep;
            try {
                const Trajectory traj = simulate(p, sim.dt, sim.t_end);
                rep = classify_attractor(traj, sim.settle_fraction, sim.cluster_tol);
            } catch (const DivergenceError&) {
                rep.diverged = true;
            }
            grid.cells[idx] = rep;
            if (on_cell) {
                std::scoped_lock lock(cb_mutex);
                on_cell(idx, rep);
            }
        }
    };

    unsigned nw = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
    nw = static_cast<unsigned>(std::min<std::size_t>(nw, std::max<std::size_t>(1, todo.size())));
    if (nw <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nw);
        for (unsigned i = 0; i < nw; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return grid;
}

bool sweep_complete(const BifurcationGrid& grid) {
    for (const auto& c : grid.cells)
        if (!c) return false;
    return true;
}

void write_grid_csv(const BifurcationGrid& grid, const std::string& path) {
    if (!sweep_complete(grid)) throw DataError("grid incomplete; finish the sweep first");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "alpha,delta,kind,n,m,cycle_count\n";
    const std::size_t na = grid.alpha_axis.size();
    for (std::size_t idx = 0; idx < grid.cells.size(); ++idx) {
        const AttractorReport& r = *grid.cells[idx];
        const std::size_t ia = idx % na;
        const std::size_t id = idx / na;
        out << fmt_g17(grid.alpha_axis[ia]) << ',' << fmt_g17(grid.delta_axis[id]) << ','
            << (r.diverged ? "diverged" : to_string(r.kind)) << ','
            << (r.entrainment.resolved ? r.entrainment.n : 0) << ','
            << (r.entrainment.resolved ? r.entrainment.m : 0) << ',' << r.cycle_count << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}
