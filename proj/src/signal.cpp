#include "vfo/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"

namespace vfo {

void PhysicalConstants::validate() const {
    const double vals[] = {xi0, fold_length, air_density, sound_speed, glottal_area,
                           midpoint_velocity};
    for (double v : vals)
        if (!(v > 0.0) || !std::isfinite(v))
            throw DomainError("physical constants must be strictly positive");
}

GlottalFlow flow_from_displacement(const Trajectory& traj, const PhysicalConstants& k) {
    k.validate();
    if (traj.states.empty() || !(traj.dt > 0.0)) throw DomainError("empty trajectory");
    GlottalFlow flow;
    flow.sample_rate = 1.0 / traj.dt;
    flow.dimensionless = true;
    flow.source = FlowSource::model;
    flow.samples.resize(traj.states.size());
    const double g = k.midpoint_velocity * k.fold_length;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const State& s = traj.states[i];
        if (!s.finite()) throw DomainError("trajectory contains non-finite states");
        flow.samples[i] = g * (2.0 * k.xi0 + s.xi_l + s.xi_r);
    }
    return flow;
}

std::optional<double> autocorr_period(const std::vector<double>& samples, double min_lag,
                                      double max_lag, double threshold) {
    const std::size_t n_all = samples.size();
    auto lag_lo = static_cast<std::size_t>(std::max(1.0, std::floor(min_lag)));
    auto lag_hi = static_cast<std::size_t>(std::ceil(max_lag));
    if (n_all < 8) return std::nullopt;
    if (lag_hi + 2 >= n_all / 2) lag_hi = n_all / 2 - 2;
    if (lag_hi <= lag_lo + 1) return std::nullopt;

    // long signals: a mid-signal slice is plenty for a periodicity estimate
    std::size_t start = 0, n = n_all;
    const std::size_t want = 16384 + lag_hi;
    if (n_all > want) {
        start = (n_all - want) / 2;
        n = want;
    }

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += samples[start + i];
    mean /= static_cast<double>(n);

    std::vector<double> nr(lag_hi + 2, 0.0);
    double r0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = samples[start + i] - mean;
        r0 += v * v;
    }
    if (!(r0 > 0.0)) return std::nullopt;
    for (std::size_t lag = 1; lag <= lag_hi + 1; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i)
            acc += (samples[start + i] - mean) * (samples[start + i + lag] - mean);
        // unbiased normalization so long lags are not penalized
        nr[lag] = (acc / static_cast<double>(n - lag)) / (r0 / static_cast<double>(n));
    }

    double best = 0.0;
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) best = std::max(best, nr[lag]);
    if (best < threshold) return std::nullopt;

    // smallest-lag peak among near-maximal local maxima avoids octave-down picks
    std::size_t pick = 0;
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
        if (nr[lag] >= nr[lag - 1] && nr[lag] >= nr[lag + 1] && nr[lag] >= 0.9 * best) {
            pick = lag;
            break;
        }
    }
    if (pick == 0) return std::nullopt;

    const double ym = nr[pick - 1], y0 = nr[pick], yp = nr[pick + 1];
    const double denom = ym - 2.0 * y0 + yp;
    double refined = static_cast<double>(pick);
    if (std::fabs(denom) > 1e-30) {
        const double shift = 0.5 * (ym - yp) / denom;
        if (std::fabs(shift) <= 1.0) refined += shift;
    }
    return refined;
}

double estimate_f0(const SampledSignal& signal) {
    if (signal.samples.empty() || !(signal.sample_rate > 0.0))
        throw DataError("empty signal or invalid sample rate");
    const double fs = signal.sample_rate;
    const auto period = autocorr_period(signal.samples, fs / 500.0, fs / 50.0, 0.3);
    if (!period) throw NoVoicingError("no voicing detected in the 50-500 Hz band");
    return fs / *period;
}

std::optional<std::vector<double>> lpc_coefficients(const std::vector<double>& frame, int order) {
    const std::size_t n = frame.size();
    if (order < 1 || n < static_cast<std::size_t>(2 * order)) return std::nullopt;
    std::vector<double> r(static_cast<std::size_t>(order) + 1, 0.0);
    for (int lag = 0; lag <= order; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + static_cast<std::size_t>(lag) < n; ++i)
            acc += frame[i] * frame[i + static_cast<std::size_t>(lag)];
        r[static_cast<std::size_t>(lag)] = acc;
    }
    if (!(r[0] > 0.0)) return std::nullopt;
    r[0] *= 1.0 + 1e-9;

    std::vector<double> a(static_cast<std::size_t>(order) + 1, 0.0);
    double err = r[0];
    for (int i = 1; i <= order; ++i) {
        double acc = r[static_cast<std::size_t>(i)];
        for (int j = 1; j < i; ++j)
            acc -= a[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(i - j)];
        const double k = acc / err;
        if (!(std::fabs(k) < 1.0)) return std::nullopt;  // non-minimum-phase frame
        std::vector<double> prev(a.begin(), a.begin() + i);
        a[static_cast<std::size_t>(i)] = k;
        for (int j = 1; j < i; ++j)
            a[static_cast<std::size_t>(j)] =
                prev[static_cast<std::size_t>(j)] - k * prev[static_cast<std::size_t>(i - j)];
        err *= 1.0 - k * k;
        if (!(err > 0.0)) return std::nullopt;
    }
    std::vector<double> inv(static_cast<std::size_t>(order) + 1);
    inv[0] = 1.0;
    for (int j = 1; j <= order; ++j)
        inv[static_cast<std::size_t>(j)] = -a[static_cast<std::size_t>(j)];
    return inv;
}

namespace {

std::vector<double> fir_apply(const std::vector<double>& coeffs, const std::vector<double>& x) {
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
        double acc = 0.0;
        const std::size_t kmax = std::min(coeffs.size() - 1, n);
        for (std::size_t k = 0; k <= kmax; ++k) acc += coeffs[k] * x[n - k];
        y[n] = acc;
    }
    return y;
}

std::vector<double> leaky_integrate(const std::vector<double>& x, double rho) {
    std::vector<double> y(x.size(), 0.0);
    double acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        acc = x[n] + rho * acc;
        y[n] = acc;
    }
    return y;
}

std::vector<double> lowpass_fir(const std::vector<double>& x, double fs, double cutoff) {
    if (!(cutoff > 0.0) || cutoff >= 0.5 * fs) return x;
    constexpr int taps = 129;
    constexpr int mid = taps / 2;
    std::vector<double> h(taps);
    const double fc = cutoff / fs;
    double sum = 0.0;
    for (int k = 0; k < taps; ++k) {
        const int d = k - mid;
        const double sinc = (d == 0) ? 2.0 * fc
                                     : std::sin(2.0 * std::numbers::pi * fc * d) /
                                           (std::numbers::pi * d);
        const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / (taps - 1));
        h[static_cast<std::size_t>(k)] = sinc * win;
        sum += h[static_cast<std::size_t>(k)];
    }
    for (double& v : h) v /= sum;
    // zero-phase: compensate the linear group delay of `mid` samples
    std::vector<double> y(x.size(), 0.0);
    const auto n = static_cast<long>(x.size());
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < taps; ++k) {
            const long j = i - k + mid;
            if (j >= 0 && j < n) acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
        }
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

std::vector<double> hann_window(std::size_t len) {
    std::vector<double> w(len);
    for (std::size_t j = 0; j < len; ++j)
        w[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) /
                                    static_cast<double>(len - 1));
    return w;
}

std::vector<double> preemphasize(const std::vector<double>& x, double pre) {
    std::vector<double> y(x.size());
    double prev = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        y[n] = x[n] - pre * prev;
        prev = x[n];
    }
    return y;
}

constexpr double kRadiationLeak = 0.99;

}  // namespace

InverseFilterPlan plan_inverse_filter(const SampledSignal& signal,
                                      const InverseFilterConfig& cfg) {
    if (signal.samples.empty() || !(signal.sample_rate > 0.0))
        throw DataError("empty signal or invalid sample rate");
    const double fs = signal.sample_rate;
    InverseFilterPlan plan;
    plan.sample_rate = fs;
    plan.n_samples = signal.samples.size();
    plan.preemphasis = cfg.preemphasis;
    plan.lowpass_hz = cfg.lowpass_hz;
    plan.lpc_order = cfg.lpc_order > 0 ? cfg.lpc_order
                                       : static_cast<int>(std::lround(fs / 1000.0)) + 2;
    plan.frame_len = static_cast<std::size_t>(std::lround(cfg.frame_ms * 1e-3 * fs));
    plan.hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * 1e-3 * fs));
    if (plan.hop == 0 || plan.frame_len < 8) throw DataError("frame/hop too small at this rate");
    if (plan.frame_len < static_cast<std::size_t>(4 * plan.lpc_order))
        throw DataError("analysis frame too short for the LPC order");

    const std::vector<double> x = lowpass_fir(signal.samples, fs, cfg.lowpass_hz);
    if (!autocorr_period(x, fs / 500.0, fs / 50.0, 0.3))
        throw NoVoicingError("no voicing detected; refusing to inverse filter");
    const std::vector<double> xp = preemphasize(x, cfg.preemphasis);

    std::vector<std::size_t> offsets;
    if (xp.size() <= plan.frame_len) {
        offsets.push_back(0);
        plan.frame_len = xp.size();
    } else {
        for (std::size_t off = 0; off + plan.frame_len <= xp.size(); off += plan.hop)
            offsets.push_back(off);
    }

    const std::vector<double> w = hann_window(plan.frame_len);
    const int p = plan.lpc_order;
    const int glottal_order = std::min(4, std::max(2, p / 4));

    plan.tract.assign(offsets.size(), {});
    plan.frame_interpolated.assign(offsets.size(), false);
    for (std::size_t f = 0; f < offsets.size(); ++f) {
        std::vector<double> fx(plan.frame_len);
        for (std::size_t j = 0; j < plan.frame_len; ++j) fx[j] = xp[offsets[f] + j] * w[j];

        auto stage = [&]() -> std::optional<std::vector<double>> {
            const auto a1 = lpc_coefficients(fx, 1);
            if (!a1) return std::nullopt;
            const auto av = lpc_coefficients(fir_apply(*a1, fx), p);
            if (!av) return std::nullopt;
            const auto g1 = leaky_integrate(fir_apply(*av, fx), kRadiationLeak);
            const auto ag = lpc_coefficients(g1, glottal_order);
            if (!ag) return std::nullopt;
            const auto y = leaky_integrate(fir_apply(*ag, fx), kRadiationLeak);
            return lpc_coefficients(y, p);
        };
        if (auto coeffs = stage()) {
            plan.tract[f] = std::move(*coeffs);
        } else {
            plan.frame_interpolated[f] = true;
        }
    }

    // failed frames borrow the nearest stable frame's coefficients
    std::ptrdiff_t last_good = -1;
    for (std::size_t f = 0; f < plan.tract.size(); ++f) {
        if (!plan.frame_interpolated[f]) {
            last_good = static_cast<std::ptrdiff_t>(f);
            continue;
        }
        std::ptrdiff_t next_good = -1;
        for (std::size_t g = f + 1; g < plan.tract.size(); ++g)
            if (!plan.frame_interpolated[g]) {
                next_good = static_cast<std::ptrdiff_t>(g);
                break;
            }
        std::ptrdiff_t donor = -1;
        if (last_good >= 0 && next_good >= 0)
            donor = (static_cast<std::ptrdiff_t>(f) - last_good <=
                     next_good - static_cast<std::ptrdiff_t>(f))
                        ? last_good
                        : next_good;
        else if (last_good >= 0)
            donor = last_good;
        else if (next_good >= 0)
            donor = next_good;
        if (donor < 0) throw NoVoicingError("no stable analysis frames in signal");
        plan.tract[f] = plan.tract[static_cast<std::size_t>(donor)];
    }
    return plan;
}

GlottalFlow apply_inverse_filter(const SampledSignal& signal, const InverseFilterPlan& plan,
                                 const PhysicalConstants& k) {
    k.validate();
    if (signal.samples.size() != plan.n_samples)
        throw GridMismatchError("signal length does not match the analysis plan");
    if (plan.tract.empty()) throw DataError("empty inverse-filter plan");

    const std::vector<double> x = lowpass_fir(signal.samples, plan.sample_rate, plan.lowpass_hz);
    const std::vector<double> xp = preemphasize(x, plan.preemphasis);
    const std::vector<double> w = hann_window(plan.frame_len);

    std::vector<double> acc(xp.size(), 0.0);
    std::vector<double> wsum(xp.size(), 0.0);
    for (std::size_t f = 0; f < plan.tract.size(); ++f) {
        const std::size_t off = f * plan.hop;
        std::vector<double> fx(plan.frame_len);
        for (std::size_t j = 0; j < plan.frame_len; ++j) fx[j] = xp[off + j] * w[j];
        const std::vector<double> resid = fir_apply(plan.tract[f], fx);
        for (std::size_t j = 0; j < plan.frame_len; ++j) {
            acc[off + j] += resid[j];
            wsum[off + j] += w[j];
        }
    }
    // the floor tapers the half-covered edges; dividing by a vanishing window
    // weight would amplify the window/filter commutation error into a spike
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= std::max(wsum[i], 0.2);

    // undo pre-emphasis, then cancel lip radiation (one differentiation)
    std::vector<double> deemph(acc.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        prev = acc[i] + plan.preemphasis * prev;
        deemph[i] = prev;
    }
    std::vector<double> flow_raw = leaky_integrate(deemph, kRadiationLeak);

    const double scale = k.glottal_area / (k.air_density * k.sound_speed);
    GlottalFlow flow;
    flow.sample_rate = plan.sample_rate;
    flow.dimensionless = false;
    flow.source = FlowSource::measured;
    flow.samples.resize(flow_raw.size());
    for (std::size_t i = 0; i < flow_raw.size(); ++i) flow.samples[i] = scale * flow_raw[i];
    return flow;
}

GlottalFlow inverse_filter(const SampledSignal& signal, const InverseFilterConfig& cfg,
                           const PhysicalConstants& k) {
    return apply_inverse_filter(signal, plan_inverse_filter(signal, cfg), k);
}

void write_flow_csv(const GlottalFlow& flow, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "t,u0\n";
    for (std::size_t i = 0; i < flow.samples.size(); ++i)
        out << fmt_g17(static_cast<double>(i) / flow.sample_rate) << ','
            << fmt_g17(flow.samples[i]) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

}
