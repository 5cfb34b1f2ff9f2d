#include "vfo/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vfo/csvio.hpp"
#include "vfo/errors.hpp"

namespace vfo {

void RunConfig::normalize() {
    try {
        constants.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("constants: ") + e.what());
    }
    if (!(dt > 0.0)) throw ConfigError("simulation.dt must be > 0");
    if (!(t_end >= dt)) throw ConfigError("simulation.t_end must be >= dt");
    if (!(settle_fraction >= 0.0 && settle_fraction < 1.0))
        throw ConfigError("simulation.settle_fraction must be in [0, 1)");
    if (!(cluster_tol > 0.0)) throw ConfigError("simulation.cluster_tol must be > 0");
    if (filter.lpc_order < 0) throw ConfigError("inverse_filter.lpc_order must be >= 0");
    if (!(filter.frame_ms > 0.0) || !(filter.hop_ms > 0.0))
        throw ConfigError("inverse_filter frame/hop must be > 0");
    if (!(filter.preemphasis >= 0.0 && filter.preemphasis < 1.0))
        throw ConfigError("inverse_filter.preemphasis must be in [0, 1)");
    if (!(filter.lowpass_hz > 0.0)) throw ConfigError("inverse_filter.lowpass_hz must be > 0");
    if (optimizer.max_iters < 0) throw ConfigError("optimizer.max_iters must be >= 0");
    if (optimizer.max_halvings < 0) throw ConfigError("optimizer.max_halvings must be >= 0");
    if (optimizer.ftol_patience < 1) throw ConfigError("optimizer.ftol_patience must be >= 1");
    if (!(optimizer.tau_alpha > 0.0 && optimizer.tau_beta > 0.0 && optimizer.tau_delta > 0.0))
        throw ConfigError("optimizer step sizes must be > 0");
    if (!(optimizer.discard_fraction >= 0.0 && optimizer.discard_fraction < 1.0))
        throw ConfigError("optimizer.discard_fraction must be in [0, 1)");
    if (!(optimizer.fit_horizon > dt)) throw ConfigError("optimizer.fit_horizon must be > dt");
    optimizer.constants = constants;
    optimizer.dt = dt;
    optimizer.c_r = c_r;
    optimizer.c_l = c_l;
}

namespace {

struct Setter {
    std::function<void(RunConfig&, const std::string&)> apply;
    std::function<std::string(const RunConfig&)> dump;
};

double parse_number(const std::string& key, const std::string& raw) {
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0' || !std::isfinite(v))
        throw ConfigError("invalid number for " + key + ": " + raw);
    return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError("invalid boolean for " + key + ": " + raw);
}

std::string parse_string(const std::string& key, const std::string& raw) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
        return raw.substr(1, raw.size() - 2);
    if (!raw.empty() && raw.front() != '"') return raw;
    throw ConfigError("invalid string for " + key + ": " + raw);
}

Setter num(double RunConfig::* field) {
    return Setter{[field](RunConfig& c, const std::string& raw) {
                      c.*field = parse_number("", raw);
                  },
                  [field](const RunConfig& c) { return fmt_g17(c.*field); }};
}

template <typename Sub>
Setter num_sub(Sub RunConfig::* sub, double Sub::* field) {
    return Setter{[sub, field](RunConfig& c, const std::string& raw) {
                      (c.*sub).*field = parse_number("", raw);
                  },
                  [sub, field](const RunConfig& c) { return fmt_g17((c.*sub).*field); }};
}

template <typename Sub>
Setter int_sub(Sub RunConfig::* sub, int Sub::* field) {
    return Setter{[sub, field](RunConfig& c, const std::string& raw) {
                      (c.*sub).*field = static_cast<int>(parse_number("", raw));
                  },
                  [sub, field](const RunConfig& c) { return std::to_string((c.*sub).*field); }};
}

template <typename Sub>
Setter bool_sub(Sub RunConfig::* sub, bool Sub::* field) {
    return Setter{[sub, field](RunConfig& c, const std::string& raw) {
                      (c.*sub).*field = parse_bool("", raw);
                  },
                  [sub, field](const RunConfig& c) {
                      return std::string((c.*sub).*field ? "true" : "false");
                  }};
}

// section -> key -> setter; ordered maps keep the dump stable
const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s = [] {
        std::map<std::string, std::map<std::string, Setter>> m;
        m["constants"] = {
            {"xi0", num_sub(&RunConfig::constants, &PhysicalConstants::xi0)},
            {"fold_length", num_sub(&RunConfig::constants, &PhysicalConstants::fold_length)},
            {"air_density", num_sub(&RunConfig::constants, &PhysicalConstants::air_density)},
            {"sound_speed", num_sub(&RunConfig::constants, &PhysicalConstants::sound_speed)},
            {"glottal_area", num_sub(&RunConfig::constants, &PhysicalConstants::glottal_area)},
            {"midpoint_velocity",
             num_sub(&RunConfig::constants, &PhysicalConstants::midpoint_velocity)},
        };
        m["simulation"] = {
            {"dt", num(&RunConfig::dt)},
            {"t_end", num(&RunConfig::t_end)},
            {"c_r", num(&RunConfig::c_r)},
            {"c_l", num(&RunConfig::c_l)},
            {"settle_fraction", num(&RunConfig::settle_fraction)},
            {"cluster_tol", num(&RunConfig::cluster_tol)},
        };
        m["inverse_filter"] = {
            {"lpc_order", int_sub(&RunConfig::filter, &InverseFilterConfig::lpc_order)},
            {"frame_ms", num_sub(&RunConfig::filter, &InverseFilterConfig::frame_ms)},
            {"hop_ms", num_sub(&RunConfig::filter, &InverseFilterConfig::hop_ms)},
            {"preemphasis", num_sub(&RunConfig::filter, &InverseFilterConfig::preemphasis)},
            {"lowpass_hz", num_sub(&RunConfig::filter, &InverseFilterConfig::lowpass_hz)},
        };
        m["optimizer"] = {
            {"tau_alpha", num_sub(&RunConfig::optimizer, &OptimizerConfig::tau_alpha)},
            {"tau_beta", num_sub(&RunConfig::optimizer, &OptimizerConfig::tau_beta)},
            {"tau_delta", num_sub(&RunConfig::optimizer, &OptimizerConfig::tau_delta)},
            {"max_iters", int_sub(&RunConfig::optimizer, &OptimizerConfig::max_iters)},
            {"grad_tol", num_sub(&RunConfig::optimizer, &OptimizerConfig::grad_tol)},
            {"ftol", num_sub(&RunConfig::optimizer, &OptimizerConfig::ftol)},
            {"ftol_patience", int_sub(&RunConfig::optimizer, &OptimizerConfig::ftol_patience)},
            {"max_halvings", int_sub(&RunConfig::optimizer, &OptimizerConfig::max_halvings)},
            {"quasi_newton", bool_sub(&RunConfig::optimizer, &OptimizerConfig::quasi_newton)},
            {"fit_horizon", num_sub(&RunConfig::optimizer, &OptimizerConfig::fit_horizon)},
            {"discard_fraction",
             num_sub(&RunConfig::optimizer, &OptimizerConfig::discard_fraction)},
            {"calibrate_gain",
             bool_sub(&RunConfig::optimizer, &OptimizerConfig::calibrate_gain)},
            {"adjoint_form",
             Setter{[](RunConfig& c, const std::string& raw) {
                        const std::string v = parse_string("optimizer.adjoint_form", raw);
                        if (v == "full")
                            c.optimizer.adjoint_form = AdjointForm::full;
                        else if (v == "undamped")
                            c.optimizer.adjoint_form = AdjointForm::undamped;
                        else
                            throw ConfigError("adjoint_form must be \"full\" or \"undamped\"");
                    },
                    [](const RunConfig& c) {
                        return std::string(c.optimizer.adjoint_form == AdjointForm::full
                                               ? "\"full\""
                                               : "\"undamped\"");
                    }}},
            {"alpha_min", num_sub(&RunConfig::optimizer, &OptimizerConfig::alpha_min)},
            {"alpha_max", num_sub(&RunConfig::optimizer, &OptimizerConfig::alpha_max)},
            {"beta_min", num_sub(&RunConfig::optimizer, &OptimizerConfig::beta_min)},
            {"beta_max", num_sub(&RunConfig::optimizer, &OptimizerConfig::beta_max)},
            {"delta_min", num_sub(&RunConfig::optimizer, &OptimizerConfig::delta_min)},
            {"delta_max", num_sub(&RunConfig::optimizer, &OptimizerConfig::delta_max)},
        };
        m["classify"] = {
            {"regions_path",
             Setter{[](RunConfig& c, const std::string& raw) {
                        c.regions_path = parse_string("classify.regions_path", raw);
                    },
                    [](const RunConfig& c) { return '"' + c.regions_path + '"'; }}},
        };
        m["batch"] = {
            {"workers",
             Setter{[](RunConfig& c, const std::string& raw) {
                        const double v = parse_number("batch.workers", raw);
                        if (v < 0 || v != std::floor(v))
                            throw ConfigError("batch.workers must be a non-negative integer");
                        c.workers = static_cast<unsigned>(v);
                    },
                    [](const RunConfig& c) { return std::to_string(c.workers); }}},
        };
        return m;
    }();
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!schema().count(section))
                throw ConfigError("unknown config section: [" + section + "]");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (section.empty())
            throw ConfigError("key outside any section: " + key);
        const auto& keys = schema().at(section);
        const auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError("unknown config key: " + section + "." + key);
        try {
            it->second.apply(cfg, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(section + "." + key + ": " + e.what());
        }
    }
    cfg.normalize();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [section, keys] : schema()) {
        if (!first) out << '\n';
        first = false;
        out << '[' << section << "]\n";
        for (const auto& [key, setter] : keys) out << key << " = " << setter.dump(cfg) << '\n';
    }
    return out.str();
}

}
