#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nlmc/errors.hpp"
#include "nlmc/grid.hpp"

namespace nlmc {

/// Relative-permeability model with quadratic Corey curves.
struct CoreyParams {
    double swc = 0.2; ///< connate water saturation
    double sor = 0.2; ///< residual oil saturation
    double muw = 1.0;
    double muo = 1.0;
};

/// Resolved experiment configuration. Parsed from flat key=value text;
/// every key that affects results is echoed into the run manifest.
struct ExperimentConfig {
    int nx = 100;
    int N1 = 20;
    int layers = 4; ///< layers_infinity for global regions

    double dt = 0.01;
    double T = 1.0;
    bool implicit_step = false;
    std::vector<double> obs_times; ///< defaults to {T}

    std::string scheme = "nlmc"; ///< fine|baseline|nlmc|nlmc-nonlinear|two-phase
    double beta = 1.0;
    CoreyParams corey;
    double eps_scale = 1.0;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;

    bool dual_continuum = false;
    double threshold = 1e3;
    bool threshold_log10 = false;

    std::string kappa_source = "constant"; ///< constant|channels|file
    double kappa_value = 1.0;
    std::string kappa_file;
    double kappa_background = 1.0;
    double kappa_channel = 1e4;
    int kappa_n_channels = 8;
    int kappa_thickness = 1;
    unsigned long seed = 1;

    double well_rate = 0.05; ///< quarter-five-spot injection rate

    std::vector<int> sweep_layers; ///< layer list for the sweep subcommand
    std::vector<double> sweep_beta;

    bool snapshots = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline int parse_layers_token(const std::string& t) {
    if (t == "inf" || t == "infinity") return layers_infinity;
    return std::stoi(t);
}

inline bool parse_bool(const std::string& key, const std::string& t) {
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + t);
}

} // namespace detail

inline ExperimentConfig parse_config_text(std::istream& in, const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got: " + line);
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
        if (!kv.emplace(key, val).second)
            throw ConfigError(origin + ": duplicate key " + key);
    }

    ExperimentConfig c;
    std::set<std::string> seen;
    auto take = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        seen.insert(key);
        return &it->second;
    };
    auto as_int = [&](const char* key, int& dst) {
        if (auto* v = take(key)) dst = std::stoi(*v);
    };
    auto as_double = [&](const char* key, double& dst) {
        if (auto* v = take(key)) dst = std::stod(*v);
    };
    auto as_bool = [&](const char* key, bool& dst) {
        if (auto* v = take(key)) dst = detail::parse_bool(key, *v);
    };
    auto as_string = [&](const char* key, std::string& dst) {
        if (auto* v = take(key)) dst = *v;
    };

    try {
        as_int("grid.nx", c.nx);
        as_int("grid.N1", c.N1);
        if (auto* v = take("oversample.layers")) c.layers = detail::parse_layers_token(*v);
        as_double("time.dt", c.dt);
        as_double("time.T", c.T);
        as_bool("time.implicit", c.implicit_step);
        if (auto* v = take("obs.times"))
            for (const auto& t : detail::split_list(*v)) c.obs_times.push_back(std::stod(t));
        as_string("scheme", c.scheme);
        as_double("beta", c.beta);
        as_double("corey.swc", c.corey.swc);
        as_double("corey.sor", c.corey.sor);
        as_double("corey.muw", c.corey.muw);
        as_double("corey.muo", c.corey.muo);
        as_double("diffusion.eps_scale", c.eps_scale);
        as_double("solver.newton_tol", c.newton_tol);
        as_int("solver.newton_max_iter", c.newton_max_iter);
        if (auto* v = take("continuum.threshold")) {
            c.dual_continuum = true;
            c.threshold = std::stod(*v);
        }
        as_bool("continuum.log10", c.threshold_log10);
        as_string("kappa.source", c.kappa_source);
        as_double("kappa.value", c.kappa_value);
        as_string("kappa.file", c.kappa_file);
        as_double("kappa.background", c.kappa_background);
        as_double("kappa.channel", c.kappa_channel);
        as_int("kappa.channels", c.kappa_n_channels);
        as_int("kappa.thickness", c.kappa_thickness);
        if (auto* v = take("kappa.seed")) c.seed = std::stoul(*v);
        as_double("wells.rate", c.well_rate);
        if (auto* v = take("sweep.layers"))
            for (const auto& t : detail::split_list(*v))
                c.sweep_layers.push_back(detail::parse_layers_token(t));
        if (auto* v = take("sweep.beta"))
            for (const auto& t : detail::split_list(*v)) c.sweep_beta.push_back(std::stod(t));
        as_bool("snapshots", c.snapshots);
    } catch (const std::invalid_argument&) {
        throw ConfigError(origin + ": malformed numeric value");
    } catch (const std::out_of_range&) {
        throw ConfigError(origin + ": numeric value out of range");
    }

    for (const auto& [key, val] : kv)
        if (!seen.count(key))
            throw ConfigError(origin + ": unknown config key " + key);

    if (!(c.dt > 0.0)) throw ConfigError("config: time.dt must be positive");
    if (c.T < c.dt) throw ConfigError("config: time.T must be at least time.dt");
    if (c.beta < 1.0) throw ConfigError("config: beta must be >= 1");
    double res = c.corey.swc + c.corey.sor;
    if (res < 0.0 || res >= 1.0)
        throw ConfigError("config: need 0 <= corey.swc + corey.sor < 1");
    static const std::set<std::string> schemes = {"fine", "baseline", "nlmc",
                                                  "nlmc-nonlinear", "two-phase"};
    if (!schemes.count(c.scheme))
        throw ConfigError("config: unknown scheme " + c.scheme);
    if (c.obs_times.empty()) c.obs_times.push_back(c.T);
    for (double t : c.obs_times)
        if (t <= 0.0 || t > c.T + 1e-12)
            throw ConfigError("config: observation times must lie in (0, T]");
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    return parse_config_text(in, path);
}

inline std::string layers_to_string(int layers) {
    return layers == layers_infinity ? "inf" : std::to_string(layers);
}

/// Serializes the resolved configuration; the CLI writes this as the run
/// manifest so results are reproducible from the artifact alone.
inline std::string manifest_text(const ExperimentConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "grid.nx = " << c.nx << "\n";
    out << "grid.N1 = " << c.N1 << "\n";
    out << "oversample.layers = " << layers_to_string(c.layers) << "\n";
    out << "time.dt = " << c.dt << "\n";
    out << "time.T = " << c.T << "\n";
    out << "time.implicit = " << (c.implicit_step ? "true" : "false") << "\n";
    out << "obs.times =";
    for (size_t i = 0; i < c.obs_times.size(); ++i)
        out << (i ? "," : " ") << c.obs_times[i];
    out << "\n";
    out << "scheme = " << c.scheme << "\n";
    out << "beta = " << c.beta << "\n";
    out << "corey.swc = " << c.corey.swc << "\n";
    out << "corey.sor = " << c.corey.sor << "\n";
    out << "corey.muw = " << c.corey.muw << "\n";
    out << "corey.muo = " << c.corey.muo << "\n";
    out << "diffusion.eps_scale = " << c.eps_scale << "\n";
    out << "solver.newton_tol = " << c.newton_tol << "\n";
    out << "solver.newton_max_iter = " << c.newton_max_iter << "\n";
    if (c.dual_continuum) {
        out << "continuum.threshold = " << c.threshold << "\n";
        out << "continuum.log10 = " << (c.threshold_log10 ? "true" : "false") << "\n";
    }
    out << "kappa.source = " << c.kappa_source << "\n";
    if (c.kappa_source == "constant") out << "kappa.value = " << c.kappa_value << "\n";
    if (c.kappa_source == "file") out << "kappa.file = " << c.kappa_file << "\n";
    if (c.kappa_source == "channels") {
        out << "kappa.background = " << c.kappa_background << "\n";
        out << "kappa.channel = " << c.kappa_channel << "\n";
        out << "kappa.channels = " << c.kappa_n_channels << "\n";
        out << "kappa.thickness = " << c.kappa_thickness << "\n";
        out << "kappa.seed = " << c.seed << "\n";
    }
    out << "wells.rate = " << c.well_rate << "\n";
    if (!c.sweep_layers.empty()) {
        out << "sweep.layers =";
        for (size_t i = 0; i < c.sweep_layers.size(); ++i)
            out << (i ? "," : " ") << layers_to_string(c.sweep_layers[i]);
        out << "\n";
    }
    if (!c.sweep_beta.empty()) {
        out << "sweep.beta =";
        for (size_t i = 0; i < c.sweep_beta.size(); ++i) out << (i ? "," : " ") << c.sweep_beta[i];
        out << "\n";
    }
    out << "snapshots = " << (c.snapshots ? "true" : "false") << "\n";
    return out.str();
}

} // namespace nlmc
