#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nlmc/config.hpp"
#include "nlmc/error_report.hpp"
#include "nlmc/field_io.hpp"
#include "nlmc/fine_solvers.hpp"
#include "nlmc/nlmc_linear.hpp"
#include "nlmc/nlmc_nonlinear.hpp"
#include "nlmc/two_phase.hpp"

namespace nlmc {

/// Grids, medium, continua and driving terms resolved from a configuration.
/// All experiments run a quarter-five-spot: injection in the lower-left
/// fine cell, production in the upper-right, no-flow boundaries.
struct ExperimentSetup {
    ExperimentConfig config;
    FineGrid fg;
    CoarseGrid cg;
    ScalarField kappa;
    ContinuumPartition partition;
    ScalarField q;
    FluxField u; ///< velocity of the initial unit-mobility pressure solve
};

inline ExperimentSetup build_setup(const ExperimentConfig& cfg) {
    ExperimentSetup s;
    s.config = cfg;
    auto [fg, cg] = build_grids(cfg.nx, cfg.N1);
    s.fg = fg;
    s.cg = cg;

    if (cfg.kappa_source == "constant") {
        if (!(cfg.kappa_value > 0.0)) throw ConfigError("kappa.value must be positive");
        s.kappa = ScalarField(fg, cfg.kappa_value);
    } else if (cfg.kappa_source == "channels") {
        s.kappa = generate_channelized(fg, cfg.seed, cfg.kappa_n_channels, cfg.kappa_background,
                                       cfg.kappa_channel, cfg.kappa_thickness);
    } else if (cfg.kappa_source == "file") {
        s.kappa = load_permeability(cfg.kappa_file, fg);
    } else {
        throw ConfigError("unknown kappa.source " + cfg.kappa_source);
    }

    if (cfg.dual_continuum)
        s.partition = identify_continua(s.kappa, fg, cg, {cfg.threshold, cfg.threshold_log10});
    else
        s.partition = single_continuum(fg, cg);

    s.q = ScalarField(fg);
    double density = cfg.well_rate / (fg.h * fg.h);
    s.q[fg.cell(0, 0)] = density;
    s.q[fg.cell(fg.nx - 1, fg.ny - 1)] = -density;

    ScalarField unit(fg, 1.0);
    auto [p, u] = solve_darcy(fg, s.kappa, unit, s.q);
    s.u = u;
    return s;
}

/// Times as stepped through by a driver: every observation time is hit
/// exactly by shrinking the step inside each interval.
inline int steps_for_interval(double t0, double t1, double dt) {
    return std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt - 1e-9)));
}

/// Fine reference for single-phase transport dS/dt + div(u S^beta) = q_w,
/// starting from S = 0, injector value 1. Returns snapshots at the
/// observation times.
inline std::vector<ScalarField> fine_transport_reference(const ExperimentSetup& s, double beta,
                                                         const std::vector<double>& times) {
    const auto& cfg = s.config;
    PowerFlux lambda{beta};
    auto lam = [&](double x) { return lambda.value(x); };
    double slope = std::max(1.0, beta);
    double dt_cfl = transport_cfl_dt(s.fg, s.u, slope);
    double dt_base = std::min(cfg.dt, dt_cfl);

    ScalarField S(s.fg, 0.0);
    std::vector<ScalarField> out;
    double t = 0.0;
    for (double t_obs : times) {
        int n = steps_for_interval(t, t_obs, dt_base);
        double dt = (t_obs - t) / n;
        for (int k = 0; k < n; ++k) {
            ScalarField q_w = compose_well_source(s.fg, s.q, S, lam, 1.0);
            S = step_transport_fine(s.fg, s.u, S, lam, dt, q_w);
        }
        t = t_obs;
        out.push_back(S);
    }
    return out;
}

/// Linear NLMC trajectory for dS/dt + div(u S) = q_w; coarse averages at the
/// observation times.
inline std::vector<Eigen::VectorXd> linear_nlmc_trajectory(const ExperimentSetup& s, int layers,
                                                           const std::vector<double>& times,
                                                           BasisSet* basis_out = nullptr) {
    double eps = artificial_diffusion(s.u, s.config.eps_scale);
    BasisSet basis = build_transport_basis(s.fg, s.cg, s.partition, s.u, layers, eps);
    UpscaledSystem sys = assemble_upscaled(s.fg, s.partition, basis, s.u);

    auto lam = [](double x) { return x; };
    CoarseState state;
    state.values = Eigen::VectorXd::Zero(s.partition.count());
    double dt_base = std::min(s.config.dt, coarse_cfl_dt(sys));

    std::vector<Eigen::VectorXd> out;
    for (double t_obs : times) {
        int n = steps_for_interval(state.time, t_obs, dt_base);
        double dt = (t_obs - state.time) / n;
        for (int k = 0; k < n; ++k) {
            Eigen::VectorXd G =
                compose_coarse_well_source(s.fg, s.partition, s.q, state.values, lam, 1.0);
            state = step_coarse(sys, state, dt, G);
        }
        state.time = t_obs;
        out.push_back(state.values);
    }
    if (basis_out) *basis_out = std::move(basis);
    return out;
}

/// Upwind finite-volume baseline trajectory for flux S^beta.
inline std::vector<Eigen::VectorXd> baseline_trajectory(const ExperimentSetup& s, double beta,
                                                        const std::vector<double>& times) {
    CoarseFV fv(s.fg, s.partition, s.u);
    PowerFlux lambda{beta};
    auto lam = [&](double x) { return lambda.value(x); };
    double slope = std::max(1.0, beta);
    double dt_base = std::min(s.config.dt, fv.cfl_dt(slope));

    Eigen::VectorXd U = Eigen::VectorXd::Zero(s.partition.count());
    double t = 0.0;
    std::vector<Eigen::VectorXd> out;
    for (double t_obs : times) {
        int n = steps_for_interval(t, t_obs, dt_base);
        double dt = (t_obs - t) / n;
        for (int k = 0; k < n; ++k) {
            Eigen::VectorXd Q = compose_coarse_well_source(s.fg, s.partition, s.q, U, lam, 1.0);
            U = fv.step(U, dt, lam, Q);
        }
        t = t_obs;
        out.push_back(U);
    }
    return out;
}

/// Nonlinear NLMC trajectory for flux S^beta; a fresh downscale map is
/// solved before every coarse step.
inline std::vector<Eigen::VectorXd> nonlinear_nlmc_trajectory(const ExperimentSetup& s, int layers,
                                                              double beta,
                                                              const std::vector<double>& times,
                                                              double* max_residual = nullptr) {
    const auto& cfg = s.config;
    double eps = artificial_diffusion(s.u, cfg.eps_scale);
    NewtonOptions newton{cfg.newton_tol, cfg.newton_max_iter, 30};
    NonlinearUpscaler upscaler(s.fg, s.cg, s.partition, s.u, layers, eps, beta, newton);
    PowerFlux lambda{beta};
    auto lam = [&](double x) { return lambda.value(x); };
    double dt_base = std::min(cfg.dt, upscaler.cfl_dt());

    Eigen::VectorXd U = Eigen::VectorXd::Zero(s.partition.count());
    double t = 0.0;
    double residual = 0.0;
    std::vector<Eigen::VectorXd> out;
    for (double t_obs : times) {
        int n = steps_for_interval(t, t_obs, dt_base);
        double dt = (t_obs - t) / n;
        for (int k = 0; k < n; ++k) {
            DownscaleMap map = upscaler.downscale(U);
            residual = std::max(residual, map.max_constraint_residual);
            Eigen::VectorXd Q = compose_coarse_well_source(s.fg, s.partition, s.q, U, lam, 1.0);
            U = upscaler.step(map, U, dt, Q);
            for (int r = 0; r < U.size(); ++r) U[r] = std::clamp(U[r], 0.0, 1.0);
        }
        t = t_obs;
        out.push_back(U);
    }
    if (max_residual) *max_residual = residual;
    return out;
}

/// Two-phase runs: fine IMPES reference snapshots and coarse trajectories.
inline std::vector<ScalarField> fine_two_phase_reference(const ExperimentSetup& s,
                                                         const MobilityModel& mob,
                                                         const std::vector<double>& times) {
    return run_two_phase_fine(s.fg, s.kappa, s.q, mob, s.config.dt, times);
}

inline std::vector<Eigen::VectorXd> coarse_two_phase_trajectory(const ExperimentSetup& s,
                                                                const MobilityModel& mob,
                                                                CoarseTwoPhase::Kind kind,
                                                                int layers,
                                                                const std::vector<double>& times,
                                                                double* max_clamp = nullptr) {
    CoarseTwoPhase sim(s.fg, s.cg, s.partition, s.kappa, s.q, mob, kind, layers,
                       s.config.eps_scale, s.config.dt);
    std::vector<Eigen::VectorXd> out;
    for (double t : times) {
        sim.advance_to(t);
        out.push_back(sim.averages());
    }
    if (max_clamp) *max_clamp = sim.max_clamp();
    return out;
}

/// Piecewise-constant fine field from coarse averages (for snapshots).
inline ScalarField piecewise_field(const FineGrid& fg, const ContinuumPartition& partition,
                                   const Eigen::VectorXd& U) {
    ScalarField out(fg);
    for (int c = 0; c < fg.cell_count(); ++c) out[c] = U[partition.region_of_cell[c]];
    return out;
}

struct RunResult {
    ErrorReport report;
    std::vector<std::pair<std::string, ScalarField>> snapshots;
};

namespace detail {

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

inline std::string snapshot_name(const std::string& scheme, double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "snap_%s_t%g.txt", scheme.c_str(), t);
    return buf;
}

} // namespace detail

/// Runs one scheme of the experiment family selected by the config and
/// reports volume-weighted errors against the matching fine reference.
inline RunResult run_scheme(const ExperimentSetup& s, const std::string& scheme, int layers,
                            double beta) {
    const auto& cfg = s.config;
    const auto& times = cfg.obs_times;
    RunResult result;
    detail::Stopwatch clock;
    std::vector<double> volumes = s.partition.volumes();

    bool two_phase_family = (cfg.scheme == "two-phase");
    if (two_phase_family) {
        CoreyMobility mob(cfg.corey);
        auto fine = fine_two_phase_reference(s, mob, times);
        std::vector<Eigen::VectorXd> coarse;
        double clamp = 0.0;
        if (scheme == "fine") {
            for (const auto& f : fine) {
                auto favg = average_per_region(f, s.partition);
                coarse.push_back(Eigen::Map<const Eigen::VectorXd>(favg.data(), favg.size()));
            }
        } else if (scheme == "baseline") {
            coarse = coarse_two_phase_trajectory(s, mob, CoarseTwoPhase::Kind::Baseline, layers,
                                                 times, &clamp);
        } else if (scheme == "nlmc" || scheme == "two-phase") {
            coarse = coarse_two_phase_trajectory(s, mob, CoarseTwoPhase::Kind::Nlmc, layers, times,
                                                 &clamp);
        } else {
            throw ConfigError("scheme " + scheme + " is not part of the two-phase family");
        }
        for (size_t k = 0; k < times.size(); ++k) {
            auto favg = average_per_region(fine[k], s.partition);
            Eigen::VectorXd ref = Eigen::Map<const Eigen::VectorXd>(favg.data(), favg.size());
            ErrorRow row;
            row.scheme = (scheme == "two-phase") ? "nlmc" : scheme;
            row.layers = layers;
            row.beta = cfg.beta;
            row.time = times[k];
            row.error = relative_l2_error(coarse[k], ref, volumes);
            row.runtime_s = clock.seconds();
            result.report.rows.push_back(row);
            if (cfg.snapshots)
                result.snapshots.emplace_back(detail::snapshot_name(row.scheme, times[k]),
                                              piecewise_field(s.fg, s.partition, coarse[k]));
        }
        return result;
    }

    // Single-phase transport family with flux S^beta.
    auto fine = fine_transport_reference(s, beta, times);
    std::vector<Eigen::VectorXd> coarse;
    if (scheme == "fine") {
        for (const auto& f : fine) {
            auto favg = average_per_region(f, s.partition);
            coarse.push_back(Eigen::Map<const Eigen::VectorXd>(favg.data(), favg.size()));
        }
    } else if (scheme == "baseline") {
        coarse = baseline_trajectory(s, beta, times);
    } else if (scheme == "nlmc") {
        if (beta != 1.0)
            throw ConfigError("scheme nlmc transports S linearly; use nlmc-nonlinear for beta > 1");
        coarse = linear_nlmc_trajectory(s, layers, times);
    } else if (scheme == "nlmc-nonlinear") {
        coarse = nonlinear_nlmc_trajectory(s, layers, beta, times);
    } else {
        throw ConfigError("unknown scheme " + scheme);
    }

    for (size_t k = 0; k < times.size(); ++k) {
        auto favg = average_per_region(fine[k], s.partition);
        Eigen::VectorXd ref = Eigen::Map<const Eigen::VectorXd>(favg.data(), favg.size());
        ErrorRow row;
        row.scheme = scheme;
        row.layers = layers;
        row.beta = beta;
        row.time = times[k];
        row.error = relative_l2_error(coarse[k], ref, volumes);
        row.runtime_s = clock.seconds();
        result.report.rows.push_back(row);
        if (cfg.snapshots) {
            result.snapshots.emplace_back(detail::snapshot_name(scheme, times[k]),
                                          scheme == "fine"
                                              ? fine[k]
                                              : piecewise_field(s.fg, s.partition, coarse[k]));
        }
    }
    return result;
}

/// Sweep: the config's scheme run over the layer list (and beta list for the
/// nonlinear scheme), sharing one fine reference.
inline RunResult run_sweep(const ExperimentSetup& s) {
    const auto& cfg = s.config;
    std::vector<int> layer_list = cfg.sweep_layers.empty() ? std::vector<int>{cfg.layers}
                                                           : cfg.sweep_layers;
    std::vector<double> beta_list = cfg.sweep_beta.empty() ? std::vector<double>{cfg.beta}
                                                           : cfg.sweep_beta;
    std::string scheme = (cfg.scheme == "fine" || cfg.scheme == "baseline") ? "nlmc" : cfg.scheme;

    RunResult all;
    for (double beta : beta_list)
        for (int layers : layer_list) {
            RunResult one = run_scheme(s, scheme, layers, beta);
            all.report.rows.insert(all.report.rows.end(), one.report.rows.begin(),
                                   one.report.rows.end());
        }
    return all;
}

} // namespace nlmc
