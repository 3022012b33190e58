#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "nlmc/continuum.hpp"
#include "nlmc/errors.hpp"
#include "nlmc/field.hpp"
#include "nlmc/mobility.hpp"

namespace nlmc {

inline constexpr double cfl_max = 0.5;

/// Boundary data for the pressure solve. Sides without a Dirichlet value
/// are no-flow. With no Dirichlet side anywhere the source must be
/// compatible and the pressure gauge is fixed by a zero mean.
struct DarcyBC {
    std::optional<double> left, right, bottom, top;

    bool pure_neumann() const { return !left && !right && !bottom && !top; }
    std::optional<double> side_of_face(const FineGrid& fg, int f) const {
        if (fg.is_x_face(f)) {
            int i = f % (fg.nx + 1);
            if (i == 0) return left;
            if (i == fg.nx) return right;
        } else {
            int j = (f - fg.x_face_count()) / fg.nx;
            if (j == 0) return bottom;
            if (j == fg.ny) return top;
        }
        return std::nullopt;
    }
};

/// Two-point flux approximation of -div(kappa*mob grad p) = q with harmonic
/// face transmissibilities. Returns cell pressures and the face fluxes of
/// u = -kappa*mob grad p. Pure-Neumann systems are grounded at one cell and
/// shifted to zero mean afterwards.
inline std::pair<ScalarField, FluxField> solve_darcy(const FineGrid& fg,
                                                     const ScalarField& kappa,
                                                     const ScalarField& mobility,
                                                     const ScalarField& q,
                                                     const DarcyBC& bc = {}) {
    const int n = fg.cell_count();
    const double area = fg.h * fg.h;

    auto conductivity = [&](int c) { return kappa[c] * mobility[c]; };
    for (int c = 0; c < n; ++c)
        if (!(conductivity(c) > 0.0))
            throw SolverError("solve_darcy: non-positive conductivity at cell " +
                              std::to_string(c));

    if (bc.pure_neumann()) {
        double total = 0.0, scale = 0.0;
        for (int c = 0; c < n; ++c) {
            total += q[c] * area;
            scale += std::abs(q[c]) * area;
        }
        if (std::abs(total) > 1e-10 * std::max(1.0, scale))
            throw SolverError("solve_darcy: incompatible source, net rate " +
                              std::to_string(total));
    }

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int c = 0; c < n; ++c) rhs[c] = q[c] * area;

    std::vector<double> face_T(fg.face_count(), 0.0);
    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        if (cm >= 0 && cp >= 0) {
            double T = detail::harmonic(conductivity(cm), conductivity(cp));
            face_T[f] = T;
            trip.emplace_back(cm, cm, T);
            trip.emplace_back(cp, cp, T);
            trip.emplace_back(cm, cp, -T);
            trip.emplace_back(cp, cm, -T);
        } else if (auto g = bc.side_of_face(fg, f)) {
            int c = (cm >= 0) ? cm : cp;
            double T = 2.0 * conductivity(c); // half-cell distance
            face_T[f] = T;
            trip.emplace_back(c, c, T);
            rhs[c] += T * (*g);
        }
    }

    // Ground one cell when there is no Dirichlet side; the dropped balance
    // equation is implied by source compatibility.
    const bool ground = bc.pure_neumann();
    const int ground_cell = 0;
    Eigen::SparseMatrix<double> A(n, n);
    if (ground) {
        std::vector<Eigen::Triplet<double>> kept;
        kept.reserve(trip.size());
        for (const auto& t : trip)
            if (t.row() != ground_cell && t.col() != ground_cell) kept.push_back(t);
        kept.emplace_back(ground_cell, ground_cell, 1.0);
        rhs[ground_cell] = 0.0;
        A.setFromTriplets(kept.begin(), kept.end());
    } else {
        A.setFromTriplets(trip.begin(), trip.end());
    }

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(A);
    if (solver.info() != Eigen::Success)
        throw SolverError("solve_darcy: factorization failed (singular system)");
    Eigen::VectorXd p = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw SolverError("solve_darcy: back substitution failed");

    ScalarField pressure(fg);
    for (int c = 0; c < n; ++c) pressure[c] = p[c];
    if (ground) {
        double mean = 0.0;
        for (int c = 0; c < n; ++c) mean += pressure[c];
        mean /= n;
        for (int c = 0; c < n; ++c) pressure[c] -= mean;
    }

    FluxField u(fg);
    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        if (cm >= 0 && cp >= 0) {
            u[f] = -face_T[f] * (pressure[cp] - pressure[cm]);
        } else if (auto g = bc.side_of_face(fg, f)) {
            if (cm >= 0)
                u[f] = -face_T[f] * (*g - pressure[cm]);
            else
                u[f] = -face_T[f] * (pressure[cp] - *g);
        }
    }
    return {pressure, u};
}

/// Largest transport step the explicit upwind update admits.
inline double transport_cfl_dt(const FineGrid& fg, const FluxField& u,
                               double flux_slope_bound = 1.0) {
    double dt = std::numeric_limits<double>::infinity();
    double area = fg.h * fg.h;
    for (int c = 0; c < fg.cell_count(); ++c) {
        double out = cell_abs_outflux(fg, u, c);
        if (out > 0.0) dt = std::min(dt, cfl_max * area / (out * flux_slope_bound));
    }
    return dt;
}

/// One explicit donor-cell upwind step of dS/dt + div(u * lambda(S)) = q_w.
/// The source field is added as-is; the caller composes injection and
/// production values. Inflow through the domain boundary carries lambda(0).
inline ScalarField step_transport_fine(const FineGrid& fg, const FluxField& u,
                                       const ScalarField& S,
                                       const std::function<double(double)>& lambda,
                                       double dt, const ScalarField& q_w) {
    const double area = fg.h * fg.h;
    double dt_max = transport_cfl_dt(fg, u);
    if (dt > dt_max * (1.0 + 1e-12))
        throw SolverError("step_transport_fine: dt " + std::to_string(dt) +
                          " violates CFL bound " + std::to_string(dt_max));

    ScalarField out = S;
    for (int f = 0; f < fg.face_count(); ++f) {
        double flux = u[f];
        if (flux == 0.0) continue;
        auto [cm, cp] = fg.face_cells(f);
        int donor = flux > 0.0 ? cm : cp;
        double val = flux * (donor >= 0 ? lambda(S[donor]) : lambda(0.0));
        if (cm >= 0) out[cm] -= dt / area * val;
        if (cp >= 0) out[cp] += dt / area * val;
    }
    for (int c = 0; c < fg.cell_count(); ++c) out[c] += dt * q_w[c];
    return out;
}

/// Injection/production source for a transport step: injectors add fluid at
/// the injected value, producers remove at the ambient cell value.
inline ScalarField compose_well_source(const FineGrid& fg, const ScalarField& q,
                                       const ScalarField& S,
                                       const std::function<double(double)>& lambda,
                                       double injected_value) {
    ScalarField q_w(fg);
    for (int c = 0; c < fg.cell_count(); ++c) {
        if (q[c] > 0.0)
            q_w[c] = q[c] * lambda(injected_value);
        else if (q[c] < 0.0)
            q_w[c] = q[c] * lambda(S[c]);
    }
    return q_w;
}

/// Fine two-phase state over one IMPES step.
struct TwoPhaseState {
    ScalarField S;
    ScalarField p;
    FluxField u_t;
    double t = 0.0;
    double clamp_magnitude = 0.0; ///< largest saturation clamp this step
};

/// Fine-scale IMPES: implicit pressure with total mobility, explicit
/// fractional-flow transport subcycled to the CFL bound within each outer
/// step. Saturations are clamped to [swc, 1-sor] and the clamp is recorded.
class FineTwoPhase {
  public:
    FineTwoPhase(const FineGrid& fg, ScalarField kappa, ScalarField q,
                 const MobilityModel& mob, double dt_outer)
        : fg_(fg), kappa_(std::move(kappa)), q_(std::move(q)), mob_(mob),
          dt_outer_(dt_outer) {
        state_.S = ScalarField(fg_, mob_.s_min());
        state_.t = 0.0;
        frac_slope_ = std::max(1.0, mob_.max_frac_slope());
    }

    const TwoPhaseState& state() const { return state_; }

    /// Advances to exactly time t_end.
    void advance_to(double t_end) {
        while (state_.t < t_end - 1e-12) {
            double dt = std::min(dt_outer_, t_end - state_.t);
            step(dt);
        }
    }

    void step(double dt_outer) {
        ScalarField mob_field(fg_);
        for (int c = 0; c < fg_.cell_count(); ++c)
            mob_field[c] = mob_.lambda_t(state_.S[c]);
        auto [p, u] = solve_darcy(fg_, kappa_, mob_field, q_);
        state_.p = p;
        state_.u_t = u;

        double dt_cfl = transport_cfl_dt(fg_, u, frac_slope_);
        int substeps = std::max(1, static_cast<int>(std::ceil(dt_outer / dt_cfl - 1e-12)));
        double dt = dt_outer / substeps;
        auto fw = [&](double s) { return mob_.frac_w(s); };
        state_.clamp_magnitude = 0.0;
        for (int k = 0; k < substeps; ++k) {
            ScalarField q_w = compose_well_source(fg_, q_, state_.S, fw, mob_.s_max());
            state_.S = step_transport_fine(fg_, u, state_.S, fw, dt, q_w);
            for (int c = 0; c < fg_.cell_count(); ++c) {
                double s = state_.S[c];
                double clamped = std::clamp(s, mob_.s_min(), mob_.s_max());
                state_.clamp_magnitude = std::max(state_.clamp_magnitude, std::abs(s - clamped));
                state_.S[c] = clamped;
            }
        }
        state_.t += dt_outer;
    }

  private:
    FineGrid fg_;
    ScalarField kappa_;
    ScalarField q_;
    const MobilityModel& mob_;
    double dt_outer_;
    double frac_slope_ = 1.0;
    TwoPhaseState state_;
};

/// Convenience driver matching the coarse runners: returns saturation
/// snapshots at the requested times.
inline std::vector<ScalarField> run_two_phase_fine(const FineGrid& fg,
                                                   const ScalarField& kappa,
                                                   const ScalarField& q,
                                                   const MobilityModel& mob,
                                                   double dt_outer,
                                                   const std::vector<double>& times) {
    FineTwoPhase sim(fg, kappa, q, mob, dt_outer);
    std::vector<ScalarField> out;
    for (double t : times) {
        sim.advance_to(t);
        out.push_back(sim.state().S);
    }
    return out;
}

} // namespace nlmc
