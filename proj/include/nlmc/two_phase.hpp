#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nlmc/continuum.hpp"
#include "nlmc/fine_solvers.hpp"
#include "nlmc/mobility.hpp"
#include "nlmc/nlmc_linear.hpp"

namespace nlmc {

/// Stable explicit step for a coarse finite-volume update driven by fine
/// interface fluxes.
inline double interface_cfl_dt(const FineGrid& fg, const ContinuumPartition& partition,
                               const InterfaceList& interfaces, const FluxField& u,
                               double slope_bound) {
    std::vector<double> out(partition.count(), 0.0);
    for (const auto& e : interfaces.entries) {
        double flux = u[e.face];
        if (flux == 0.0) continue;
        int donor_region = flux > 0.0 ? e.region_minus : e.region_plus;
        if (donor_region >= 0) out[donor_region] += std::abs(flux);
    }
    double dt = std::numeric_limits<double>::infinity();
    for (int r = 0; r < partition.count(); ++r)
        if (out[r] > 0.0)
            dt = std::min(dt, 0.5 * partition.regions[r].volume / (out[r] * slope_bound));
    return dt;
}

/// Coarse-scale two-phase IMPES driver.
///
/// Pressure: fine-grid TPFA solve with the total mobility taken piecewise
/// constant per continuum region from the current coarse averages.
/// Saturation: one explicit coarse transport step per pressure solve. The
/// NLMC variant transports the fractional-flow interpolation built from the
/// basis set constructed once at initial mobility; the baseline variant is
/// the dual-continuum upwind finite-volume scheme on the same velocity.
class CoarseTwoPhase {
  public:
    enum class Kind { Nlmc, Baseline };

    CoarseTwoPhase(const FineGrid& fg, const CoarseGrid& cg, const ContinuumPartition& partition,
                   ScalarField kappa, ScalarField q, const MobilityModel& mob, Kind kind,
                   int layers, double eps_scale, double dt_cap)
        : fg_(fg), cg_(cg), partition_(partition), kappa_(std::move(kappa)), q_(std::move(q)),
          mob_(mob), kind_(kind), dt_cap_(dt_cap), interfaces_(region_interfaces(fg, partition)) {
        frac_slope_ = std::max(1.0, mob_.max_frac_slope());
        U_ = Eigen::VectorXd::Constant(partition_.count(), mob_.s_min());

        // Reference velocity at initial mobility; the basis transports
        // S against u_t / lambda_t(S0), and S0 is uniform here.
        double lambda0 = mob_.lambda_t(mob_.s_min());
        ScalarField mob0(fg_, lambda0);
        auto [p0, u0] = solve_darcy(fg_, kappa_, mob0, q_);
        FluxField u_ref = u0;
        for (double& f : u_ref.f) f /= lambda0;
        if (kind_ == Kind::Nlmc) {
            double eps = artificial_diffusion(u_ref, eps_scale);
            basis_ = build_transport_basis(fg_, cg_, partition_, u_ref, layers, eps);
        }
    }

    const Eigen::VectorXd& averages() const { return U_; }
    double time() const { return t_; }
    double max_clamp() const { return max_clamp_; }
    double max_div_residual() const { return max_div_residual_; }
    const BasisSet& basis() const { return basis_; }

    void advance_to(double t_end) {
        while (t_ < t_end - 1e-12) step(t_end);
    }

  private:
    void step(double t_end) {
        ScalarField mob_field(fg_);
        for (int c = 0; c < fg_.cell_count(); ++c)
            mob_field[c] = mob_.lambda_t(U_[partition_.region_of_cell[c]]);
        auto [p, u] = solve_darcy(fg_, kappa_, mob_field, q_);
        check_divergence(u);

        double dt = std::min({dt_cap_, t_end - t_,
                              interface_cfl_dt(fg_, partition_, interfaces_, u, frac_slope_)});

        auto fw = [&](double s) { return mob_.frac_w(s); };
        Eigen::VectorXd Q =
            compose_coarse_well_source(fg_, partition_, q_, U_, fw, mob_.s_max());

        Eigen::VectorXd phi(partition_.count());
        if (kind_ == Kind::Nlmc) {
            Eigen::VectorXd Fw(partition_.count());
            for (int r = 0; r < partition_.count(); ++r) Fw[r] = mob_.frac_w(U_[r]);
            ScalarField W = reconstruct(fg_, basis_, Fw);
            phi = interface_flux_rows(W, u);
        } else {
            CoarseFV fv(fg_, partition_, u);
            Eigen::VectorXd next = fv.step(U_, dt, fw, Q);
            finish_step(next, dt);
            return;
        }

        Eigen::VectorXd next = U_;
        for (int r = 0; r < partition_.count(); ++r)
            next[r] += dt * (Q[r] - phi[r]) / partition_.regions[r].volume;
        finish_step(next, dt);
    }

    Eigen::VectorXd interface_flux_rows(const ScalarField& W, const FluxField& u) const {
        Eigen::VectorXd phi = Eigen::VectorXd::Zero(partition_.count());
        for (const auto& e : interfaces_.entries) {
            double flux = u[e.face];
            if (flux == 0.0) continue;
            auto [cm, cp] = fg_.face_cells(e.face);
            int donor = flux > 0.0 ? cm : cp;
            double val = flux * (donor >= 0 ? W[donor] : 0.0);
            if (e.region_minus >= 0) phi[e.region_minus] += val;
            if (e.region_plus >= 0) phi[e.region_plus] -= val;
        }
        return phi;
    }

    void finish_step(Eigen::VectorXd& next, double dt) {
        for (int r = 0; r < next.size(); ++r) {
            double clamped = std::clamp(next[r], mob_.s_min(), mob_.s_max());
            max_clamp_ = std::max(max_clamp_, std::abs(next[r] - clamped));
            next[r] = clamped;
        }
        U_ = next;
        t_ += dt;
    }

    void check_divergence(const FluxField& u) {
        double area = fg_.h * fg_.h;
        double scale = 0.0;
        for (int c = 0; c < fg_.cell_count(); ++c) scale = std::max(scale, std::abs(q_[c]) * area);
        for (int c = 0; c < fg_.cell_count(); ++c) {
            double r = std::abs(cell_outflux(fg_, u, c) - q_[c] * area);
            max_div_residual_ = std::max(max_div_residual_, r / std::max(scale, 1e-300));
        }
    }

    FineGrid fg_;
    CoarseGrid cg_;
    ContinuumPartition partition_;
    ScalarField kappa_;
    ScalarField q_;
    const MobilityModel& mob_;
    Kind kind_;
    double dt_cap_;
    InterfaceList interfaces_;
    BasisSet basis_;
    double frac_slope_ = 1.0;
    Eigen::VectorXd U_;
    double t_ = 0.0;
    double max_clamp_ = 0.0;
    double max_div_residual_ = 0.0;
};

} // namespace nlmc
