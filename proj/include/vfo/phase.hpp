#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vfo/model.hpp"

namespace vfo {

enum class Oscillator { right, left };
enum class CrossingDirection { up, down };

struct PoincareCrossing {
    double t = 0.0;
    double value = 0.0;  // displacement at the crossing
    Oscillator oscillator = Oscillator::right;
};

struct EntrainmentRatio {
    int n = 0;  // right-oscillator loops
    int m = 0;  // left-oscillator loops
    bool resolved = false;
};

enum class AttractorKind { fixed_point, limit_cycle, multi_limit_cycle, torus, unclassified };

std::string to_string(AttractorKind k);
std::optional<AttractorKind> attractor_kind_from_string(const std::string& s);

struct AttractorReport {
    AttractorKind kind = AttractorKind::unclassified;
    int cycle_count = 0;
    EntrainmentRatio entrainment;
    int clusters_right = 0;
    int clusters_left = 0;
    bool diverged = false;  // sweep cells where the simulation blew up
};

// crossings of dxi through zero in the given direction, after discarding the
// first settle_fraction of the samples; times/values linearly interpolated
std::vector<PoincareCrossing> poincare_crossings(const Trajectory& traj, Oscillator osc,
                                                 double settle_fraction,
                                                 CrossingDirection direction = CrossingDirection::up);

// ratio of the two sides' mean loop rates, snapped to the nearest rational
// with components capped at 16; `resolved` requires both a close rational fit
// and cyclically revisited compact section clusters on both sides (a genuine
// phase lock, not just a rate coincidence)
EntrainmentRatio entrainment_ratio(const Trajectory& traj, double settle_fraction);

AttractorReport classify_attractor(const Trajectory& traj, double settle_fraction = 0.5,
                                   double cluster_tol = 1e-2);

struct SweepSimConfig {
    double dt = 0.01;
    double t_end = 300.0;
    double c_r = 0.1;
    double c_l = 0.1;
    double settle_fraction = 0.5;
    double cluster_tol = 1e-2;
};

struct BifurcationGrid {
    std::vector<double> alpha_axis;
    std::vector<double> delta_axis;
    // index = i_delta * alpha_axis.size() + i_alpha; empty optional = not yet computed
    std::vector<std::optional<AttractorReport>> cells;

    std::size_t index(std::size_t i_alpha, std::size_t i_delta) const {
        return i_delta * alpha_axis.size() + i_alpha;
    }
    const std::optional<AttractorReport>& cell(std::size_t i_alpha, std::size_t i_delta) const {
        return cells[index(i_alpha, i_delta)];
    }
};

// simulates and classifies every (alpha, delta) cell at fixed beta; cells where
// the simulation diverges are marked, not fatal.  `seed` supplies already-known
// cells (resume); `on_cell` is invoked for each newly computed cell (any order,
// serialized); `cell_limit` stops after that many new cells (0 = no limit).
BifurcationGrid bifurcation_sweep(
    std::pair<double, double> alpha_range, std::pair<double, double> delta_range, double beta,
    std::pair<std::size_t, std::size_t> grid_shape, const SweepSimConfig& sim,
    unsigned workers = 0,
    const std::function<void(std::size_t, const AttractorReport&)>& on_cell = {},
    const std::vector<std::optional<AttractorReport>>* seed = nullptr,
    std::size_t cell_limit = 0);

// true when every cell is populated (relevant only for cell-limited sweeps)
bool sweep_complete(const BifurcationGrid& grid);

// header alpha,delta,kind,n,m,cycle_count; one row per cell in grid-index
// order; diverged cells carry kind "diverged"; unresolved entrainment is
// written as n=0,m=0.  Throws on an incomplete grid.
void write_grid_csv(const BifurcationGrid& grid, const std::string& path);

}
