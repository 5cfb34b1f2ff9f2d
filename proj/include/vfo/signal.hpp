#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vfo/model.hpp"
#include "vfo/wav.hpp"

namespace vfo {

struct PhysicalConstants {
    double xi0 = 0.1;                // half glottal width at rest, cm
    double fold_length = 1.75;       // cm
    double air_density = 1.14e-3;    // g/cm^3
    double sound_speed = 3.5e4;      // cm/s
    double glottal_area = 0.3;       // area at the glottal end, cm^2
    double midpoint_velocity = 1.0;  // air particle velocity scale; calibrated gain in practice

    void validate() const;  // all strictly positive
};

enum class FlowSource { measured, model };

struct GlottalFlow {
    // samples per unit time of the underlying grid: Hz for measured signals,
    // 1/dt for flows on the dimensionless model grid
    double sample_rate = 0.0;
    bool dimensionless = false;
    std::vector<double> samples;
    FlowSource source = FlowSource::measured;
};

struct InverseFilterConfig {
    int lpc_order = 0;  // 0 = auto: sample_rate/1000 + 2
    double frame_ms = 32.0;
    double hop_ms = 16.0;
    double preemphasis = 0.97;
    double lowpass_hz = 4000.0;
};

// u0(t) = vc * d * (2*xi0 + xi_l + xi_r) on the trajectory grid
GlottalFlow flow_from_displacement(const Trajectory& traj, const PhysicalConstants& k);

// autocorrelation peak in the 50-500 Hz band with parabolic interpolation;
// throws NoVoicingError when no normalized peak reaches 0.3
double estimate_f0(const SampledSignal& signal);

// per-frame all-pole coefficients estimated by the staged glottal inverse
// filter; reusable so the filtering stage can run with frozen coefficients
struct InverseFilterPlan {
    int lpc_order = 0;
    std::size_t frame_len = 0;
    std::size_t hop = 0;
    std::size_t n_samples = 0;
    double sample_rate = 0.0;
    double preemphasis = 0.97;
    double lowpass_hz = 4000.0;
    // tract[i] holds 1 + order coefficients of the inverse filter for frame i
    std::vector<std::vector<double>> tract;
    std::vector<bool> frame_interpolated;  // frames whose analysis failed, coefficients reused
};

InverseFilterPlan plan_inverse_filter(const SampledSignal& signal, const InverseFilterConfig& cfg);

GlottalFlow apply_inverse_filter(const SampledSignal& signal, const InverseFilterPlan& plan,
                                 const PhysicalConstants& k);

// estimated glottal flow (A0/(rho*c)) * F^-1(p_m)
GlottalFlow inverse_filter(const SampledSignal& signal, const InverseFilterConfig& cfg,
                           const PhysicalConstants& k);

void write_flow_csv(const GlottalFlow& flow, const std::string& path);

// shared analysis helpers

// period of the dominant autocorrelation peak, in samples; nullopt when the
// normalized peak stays below `threshold`
std::optional<double> autocorr_period(const std::vector<double>& samples, double min_lag,
                                      double max_lag, double threshold);

// autocorrelation-method linear prediction via Levinson-Durbin; returns the
// inverse-filter coefficients (1, -a1, ..., -ap) or nullopt for degenerate or
// non-minimum-phase frames
std::optional<std::vector<double>> lpc_coefficients(const std::vector<double>& frame, int order);

}
