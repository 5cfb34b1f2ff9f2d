#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfo/fit.hpp"
#include "vfo/classify.hpp"
#include "vfo/config.hpp"
#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"
#include "vfo/model.hpp"
#include "vfo/phase.hpp"
#include "vfo/signal.hpp"
#include "vfo/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

vfo::RunConfig load_effective_config(const std::string& cli_path) {
    std::string path = cli_path;
    if (path.empty()) {
        if (const char* env = std::getenv("VFO_CONFIG")) path = env;
    }
    if (path.empty()) {
        vfo::RunConfig cfg;
        cfg.normalize();
        return cfg;
    }
    return vfo::load_config_file(path);
}

std::vector<vfo::PathologyRegion> load_regions(const vfo::RunConfig& cfg) {
    if (cfg.regions_path.empty()) return vfo::default_regions();
    return vfo::load_regions_json(cfg.regions_path);
}

json entrainment_json(const vfo::EntrainmentRatio& e) {
    return json{{"n", e.n}, {"m", e.m}, {"resolved", e.resolved}};
}

json report_json(const vfo::AttractorReport& rep) {
    return json{{"kind", rep.diverged ? "diverged" : vfo::to_string(rep.kind)},
                {"cycle_count", rep.cycle_count},
                {"entrainment", entrainment_json(rep.entrainment)},
                {"clusters_right", rep.clusters_right},
                {"clusters_left", rep.clusters_left}};
}

struct PartLine {
    std::size_t index;
    vfo::AttractorReport report;
};

std::string part_line(std::size_t idx, const vfo::AttractorReport& r) {
    std::ostringstream os;
    os << idx << ',' << (r.diverged ? 1 : 0) << ',' << vfo::to_string(r.kind) << ','
       << r.cycle_count << ',' << r.entrainment.n << ',' << r.entrainment.m << ','
       << (r.entrainment.resolved ? 1 : 0) << ',' << r.clusters_right << ','
       << r.clusters_left;
    return os.str();
}

std::optional<PartLine> parse_part_line(const std::string& line) {
    std::istringstream is(line);
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(is, tok, ',')) parts.push_back(tok);
    if (parts.size() != 9) return std::nullopt;
    try {
        PartLine out;
        out.index = std::stoull(parts[0]);
        out.report.diverged = parts[1] == "1";
        const auto kind = vfo::attractor_kind_from_string(parts[2]);
        if (!kind) return std::nullopt;
        out.report.kind = *kind;
        out.report.cycle_count = std::stoi(parts[3]);
        out.report.entrainment.n = std::stoi(parts[4]);
        out.report.entrainment.m = std::stoi(parts[5]);
        out.report.entrainment.resolved = parts[6] == "1";
        out.report.clusters_right = std::stoi(parts[7]);
        out.report.clusters_left = std::stoi(parts[8]);
        return out;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int run_simulate(const vfo::RunConfig& cfg, double alpha, double beta, double delta,
                 double c_r, double c_l, double dt, double t_end, const std::string& out_traj,
                 const std::string& out_flow) {
    const vfo::ModelParams p{alpha, beta, delta, c_r, c_l};
    p.validate();
    const vfo::Trajectory traj = vfo::simulate(p, dt, t_end);
    vfo::write_trajectory_csv(traj, out_traj);
    const vfo::GlottalFlow flow = vfo::flow_from_displacement(traj, cfg.constants);
    vfo::write_flow_csv(flow, out_flow);
    std::cout << "wrote " << out_traj << " and " << out_flow << " (" << traj.size()
              << " samples)\n";
    return kExitOk;
}

int run_bifurcate(const vfo::RunConfig& cfg, double alpha_min, double alpha_max,
                  double delta_min, double delta_max, std::size_t na, std::size_t nd,
                  double beta, const std::string& out, std::size_t cell_limit,
                  unsigned workers) {
    vfo::SweepSimConfig sim;
    sim.dt = cfg.dt;
    sim.t_end = cfg.t_end;
    sim.c_r = cfg.c_r;
    sim.c_l = cfg.c_l;
    sim.settle_fraction = cfg.settle_fraction;
    sim.cluster_tol = cfg.cluster_tol;

    const std::string part_path = out + ".part";
    std::vector<std::optional<vfo::AttractorReport>> seed(na * nd, std::nullopt);
    bool have_seed = false;
    if (fs::exists(part_path)) {
        std::ifstream in(part_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto parsed = parse_part_line(line);
            if (parsed && parsed->index < seed.size()) {
                seed[parsed->index] = parsed->report;
                have_seed = true;
            }
        }
        if (have_seed) std::cerr << "resuming sweep from " << part_path << "\n";
    }

    std::ofstream part(part_path, std::ios::app);
    if (!part) throw vfo::DataError("cannot open for writing: " + part_path);
    auto on_cell = [&part](std::size_t idx, const vfo::AttractorReport& r) {
        part << part_line(idx, r) << '\n';
        part.flush();
    };

    const vfo::BifurcationGrid grid = vfo::bifurcation_sweep(
        {alpha_min, alpha_max}, {delta_min, delta_max}, beta, {na, nd}, sim, workers, on_cell,
        have_seed ? &seed : nullptr, cell_limit);
    part.close();

    if (!vfo::sweep_complete(grid)) {
        std::size_t done = 0;
        for (const auto& c : grid.cells)
            if (c) ++done;
        std::cout << "partial sweep: " << done << "/" << grid.cells.size()
                  << " cells done; rerun to resume from " << part_path << "\n";
        return kExitOk;
    }

    vfo::write_grid_csv(grid, out);
    json sidecar{{"alpha_min", alpha_min}, {"alpha_max", alpha_max},
                 {"delta_min", delta_min}, {"delta_max", delta_max},
                 {"n_alpha", na},          {"n_delta", nd},
                 {"beta", beta},           {"dt", sim.dt},
                 {"t_end", sim.t_end},     {"c_r", sim.c_r},
                 {"c_l", sim.c_l},         {"settle_fraction", sim.settle_fraction},
                 {"cluster_tol", sim.cluster_tol}};
    std::ofstream side(out + ".json");
    if (!side) throw vfo::DataError("cannot open for writing: " + out + ".json");
    side << sidecar.dump(2) << '\n';
    std::error_code ec;
    fs::remove(part_path, ec);
    std::cout << "wrote " << out << " and " << out << ".json\n";
    return kExitOk;
}

vfo::ModelParams fit_params_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vfo::DataError("cannot open fit result: " + path);
    json j;
    try {
        in >> j;
        return vfo::ModelParams{j.at("alpha").get<double>(), j.at("beta").get<double>(),
                                j.at("delta").get<double>()};
    } catch (const json::exception& e) {
        throw vfo::DataError("invalid fit result JSON: " + std::string(e.what()));
    }
}

struct PipelineRow {
    std::string path;
    bool ok = false;
    std::string error;
    double f0 = 0.0;
    vfo::FitResult fit;
    vfo::AttractorReport report;
    vfo::Classification cls;
};

PipelineRow run_pipeline_one(const vfo::RunConfig& cfg,
                             const std::vector<vfo::PathologyRegion>& regions,
                             const std::string& wav_path, const vfo::ModelParams& init) {
    PipelineRow row;
    row.path = wav_path;
    try {
        const vfo::SampledSignal sig = vfo::load_wav(wav_path);
        row.f0 = vfo::estimate_f0(sig);
        const vfo::GlottalFlow flow = vfo::inverse_filter(sig, cfg.filter, cfg.constants);
        row.fit = vfo::estimate(flow, init, cfg.optimizer);
        const vfo::Trajectory traj = vfo::simulate(row.fit.params, cfg.dt, cfg.t_end);
        row.report = vfo::classify_attractor(traj, cfg.settle_fraction, cfg.cluster_tol);
        row.cls = vfo::classify(row.fit.params, row.report, regions);
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

json row_json(const PipelineRow& row) {
    json j{{"path", row.path}, {"ok", row.ok}};
    if (!row.ok) {
        j["error"] = row.error;
        return j;
    }
    j["f0_hz"] = row.f0;
    j["alpha"] = row.fit.params.alpha;
    j["beta"] = row.fit.params.beta;
    j["delta"] = row.fit.params.delta;
    j["objective"] = row.fit.objective();
    j["converged"] = row.fit.converged;
    j["reason"] = row.fit.reason;
    j["time_scale"] = row.fit.time_scale;
    j["gain"] = row.fit.gain;
    j["attractor"] = report_json(row.report);
    j["label"] = row.cls.label;
    j["attractor_agrees"] = row.cls.attractor_agrees;
    return j;
}

int run_estimate(const vfo::RunConfig& cfg, const std::string& wav_path,
                 const std::string& out, const std::string& trace,
                 const vfo::ModelParams& init) {
    const vfo::SampledSignal sig = vfo::load_wav(wav_path);
    const vfo::GlottalFlow flow = vfo::inverse_filter(sig, cfg.filter, cfg.constants);
    const vfo::FitResult fit = vfo::estimate(flow, init, cfg.optimizer);
    vfo::write_fit_json(fit, out);
    if (!trace.empty()) vfo::write_fit_trace_csv(fit, trace);
    std::cout << "wrote " << out << " (alpha=" << fit.params.alpha
              << " beta=" << fit.params.beta << " delta=" << fit.params.delta
              << " converged=" << (fit.converged ? "yes" : "no") << ")\n";
    return kExitOk;
}

int run_classify(const vfo::RunConfig& cfg, const std::optional<vfo::ModelParams>& flag_params,
                 const std::string& from_fit, const std::string& out) {
    vfo::ModelParams params;
    if (!from_fit.empty())
        params = fit_params_from_json(from_fit);
    else if (flag_params)
        params = *flag_params;
    else
        throw CLI::ValidationError("classify", "pass --alpha/--beta/--delta or --from-fit");
    params.c_r = cfg.c_r;
    params.c_l = cfg.c_l;
    params.validate();

    const auto regions = load_regions(cfg);
    const vfo::Trajectory traj = vfo::simulate(params, cfg.dt, cfg.t_end);
    const vfo::AttractorReport rep = vfo::classify_attractor(traj, cfg.settle_fraction,
                                                             cfg.cluster_tol);
    const vfo::Classification cls = vfo::classify(params, rep, regions);

    json j{{"alpha", params.alpha},
           {"beta", params.beta},
           {"delta", params.delta},
           {"attractor", report_json(rep)},
           {"label", cls.label},
           {"matched_region", cls.matched_region},
           {"attractor_agrees", cls.attractor_agrees},
           {"distances", cls.distances}};
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream os(out);
        if (!os) throw vfo::DataError("cannot open for writing: " + out);
        os << j.dump(2) << '\n';
        std::cout << "wrote " << out << " (label=" << cls.label << ")\n";
    }
    return kExitOk;
}

int run_batch(const vfo::RunConfig& cfg, const std::string& dir, const std::string& out,
              const std::string& out_csv, const vfo::ModelParams& init, unsigned workers) {
    if (!fs::is_directory(dir)) throw vfo::DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".wav") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) std::cerr << "warning: no .wav files in " << dir << "\n";

    const auto regions = load_regions(cfg);
    std::vector<PipelineRow> rows(files.size());
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= files.size()) return;
            rows[i] = run_pipeline_one(cfg, regions, files[i], init);
        }
    };
    unsigned nw = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
    nw = static_cast<unsigned>(std::min<std::size_t>(nw, std::max<std::size_t>(1, files.size())));
    if (nw <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < nw; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    json report;
    report["files"] = json::array();
    std::map<std::string, int> counts;
    int errors = 0;
    for (const auto& row : rows) {
        report["files"].push_back(row_json(row));
        if (row.ok)
            counts[row.cls.label] += 1;
        else
            ++errors;
    }
    report["summary"] = {{"total", files.size()}, {"errors", errors}, {"labels", counts}};
    std::ofstream os(out);
    if (!os) throw vfo::DataError("cannot open for writing: " + out);
    os << report.dump(2) << '\n';

    if (!out_csv.empty()) {
        std::ofstream cs(out_csv);
        if (!cs) throw vfo::DataError("cannot open for writing: " + out_csv);
        cs << "path,ok,f0_hz,alpha,beta,delta,objective,converged,kind,label,error\n";
        for (const auto& row : rows) {
            cs << row.path << ',' << (row.ok ? 1 : 0) << ',';
            if (row.ok) {
                cs << vfo::fmt_g17(row.f0) << ',' << vfo::fmt_g17(row.fit.params.alpha) << ','
                   << vfo::fmt_g17(row.fit.params.beta) << ','
                   << vfo::fmt_g17(row.fit.params.delta) << ','
                   << vfo::fmt_g17(row.fit.objective()) << ','
                   << (row.fit.converged ? 1 : 0) << ','
                   << (row.report.diverged ? "diverged" : vfo::to_string(row.report.kind)) << ','
                   << row.cls.label << ',';
            } else {
                cs << ",,,,,,,,";
            }
            std::string msg = row.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            cs << msg << '\n';
        }
    }
    std::cout << "wrote " << out << " (" << files.size() << " files, " << errors
              << " errors)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asymmetric vocal-fold model toolkit: simulate, sweep, fit, classify"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "config file (TOML subset; env VFO_CONFIG)");

    auto* sim = app.add_subcommand("simulate", "integrate the model and export CSVs");
    double s_alpha = 0.0, s_beta = -1.0, s_delta = 0.0;
    double s_cr = -1.0, s_cl = -1.0, s_dt = -1.0, s_tend = -1.0;
    std::string s_traj = "trajectory.csv", s_flow = "flow.csv";
    sim->add_option("--alpha", s_alpha, "coupling coefficient")->required();
    sim->add_option("--delta", s_delta, "asymmetry coefficient")->required();
    sim->add_option("--beta", s_beta, "damping coefficient (default from config)");
    sim->add_option("--c-r", s_cr, "right initial displacement");
    sim->add_option("--c-l", s_cl, "left initial displacement");
    sim->add_option("--dt", s_dt, "time step");
    sim->add_option("--t-end", s_tend, "horizon in dimensionless time");
    sim->add_option("--out-traj", s_traj, "trajectory CSV path");
    sim->add_option("--out-flow", s_flow, "glottal flow CSV path");

    auto* bif = app.add_subcommand("bifurcate", "attractor sweep over the (alpha, delta) plane");
    double b_amin = 0.3, b_amax = 0.7, b_dmin = 0.0, b_dmax = 1.0, b_beta = -1.0;
    std::size_t b_na = 16, b_nd = 16, b_limit = 0;
    unsigned b_workers = 0;
    std::string b_out = "grid.csv";
    bif->add_option("--alpha-min", b_amin);
    bif->add_option("--alpha-max", b_amax);
    bif->add_option("--delta-min", b_dmin);
    bif->add_option("--delta-max", b_dmax);
    bif->add_option("--na", b_na, "alpha samples");
    bif->add_option("--nd", b_nd, "delta samples");
    bif->add_option("--beta", b_beta, "fixed damping coefficient");
    bif->add_option("--out", b_out, "grid CSV path (sidecar <out>.json, resume <out>.part)");
    bif->add_option("--cell-limit", b_limit, "stop after N new cells (0 = all)");
    bif->add_option("--workers", b_workers, "worker threads (0 = auto)");

    auto* est = app.add_subcommand("estimate", "fit model parameters to a speech recording");
    std::string e_wav, e_out = "fit.json", e_trace;
    double e_ia = -1.0, e_ib = -1.0, e_id = -1.0;
    est->add_option("--wav", e_wav, "input WAV file")->required();
    est->add_option("--out", e_out, "fit result JSON path");
    est->add_option("--trace", e_trace, "per-iteration trace CSV path");
    est->add_option("--init-alpha", e_ia, "initial alpha (default 0.5)");
    est->add_option("--init-beta", e_ib, "initial beta (default 0.32)");
    est->add_option("--init-delta", e_id, "initial delta (default 0)");

    auto* cls = app.add_subcommand("classify", "attractor report and pathology label");
    double c_alpha = 0.0, c_beta = -1.0, c_delta = 0.0;
    bool c_have_alpha = false, c_have_delta = false;
    std::string c_fit, c_out;
    cls->add_option("--alpha", c_alpha)->each([&](const std::string&) { c_have_alpha = true; });
    cls->add_option("--beta", c_beta, "damping coefficient (default from config)");
    cls->add_option("--delta", c_delta)->each([&](const std::string&) { c_have_delta = true; });
    cls->add_option("--from-fit", c_fit, "read parameters from a fit result JSON");
    cls->add_option("--out", c_out, "output JSON path (default stdout)");

    auto* bat = app.add_subcommand("batch", "run the full pipeline over a directory of WAVs");
    std::string t_dir, t_out = "report.json", t_csv;
    unsigned t_workers = 0;
    bat->add_option("--dir", t_dir, "directory of .wav files")->required();
    bat->add_option("--out", t_out, "report JSON path");
    bat->add_option("--csv", t_csv, "also write a per-file CSV");
    bat->add_option("--workers", t_workers, "worker threads (0 = config/auto)");

    auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        vfo::RunConfig cfg = load_effective_config(config_path);

        if (sim->parsed()) {
            return run_simulate(cfg, s_alpha, s_beta >= 0 ? s_beta : 0.32, s_delta,
                                s_cr >= 0 ? s_cr : cfg.c_r, s_cl >= 0 ? s_cl : cfg.c_l,
                                s_dt > 0 ? s_dt : cfg.dt, s_tend > 0 ? s_tend : cfg.t_end,
                                s_traj, s_flow);
        }
        if (bif->parsed()) {
            return run_bifurcate(cfg, b_amin, b_amax, b_dmin, b_dmax, b_na, b_nd,
                                 b_beta > 0 ? b_beta : 0.32, b_out, b_limit,
                                 b_workers ? b_workers : cfg.workers);
        }
        if (est->parsed() || bat->parsed()) {
            vfo::ModelParams init{0.5, 0.32, 0.0, cfg.c_r, cfg.c_l};
            if (e_ia >= 0) init.alpha = e_ia;
            if (e_ib >= 0) init.beta = e_ib;
            if (e_id >= 0) init.delta = e_id;
            if (est->parsed()) return run_estimate(cfg, e_wav, e_out, e_trace, init);
            return run_batch(cfg, t_dir, t_out, t_csv, init,
                             t_workers ? t_workers : cfg.workers);
        }
        if (cls->parsed()) {
            std::optional<vfo::ModelParams> params;
            if (c_have_alpha || c_have_delta) {
                if (!(c_have_alpha && c_have_delta))
                    throw CLI::ValidationError("classify", "--alpha and --delta go together");
                params = vfo::ModelParams{c_alpha, c_beta > 0 ? c_beta : 0.32, c_delta};
            }
            return run_classify(cfg, params, c_fit, c_out);
        }
        if (dump->parsed()) {
            std::cout << vfo::dump_config(cfg);
            return kExitOk;
        }
        return kExitUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const vfo::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const vfo::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const vfo::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const vfo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
