#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nlmc/constrained_local.hpp"
#include "nlmc/continuum.hpp"
#include "nlmc/nlmc_linear.hpp"
#include "nlmc/parallel.hpp"

namespace nlmc {

/// The downscale state for one coarse step: per coarse cell, the local
/// constrained solve driven by the current averages, plus the transported
/// flux values cached on region interfaces. With whole-domain oversampling
/// every coarse cell shares a single global solve.
struct DownscaleMap {
    std::vector<LocalSolution> solutions;
    std::vector<int> solution_of_coarse; ///< coarse cell -> solutions index
    std::vector<double> face_lambda;     ///< per interface use, lambda(N_owner(donor))
    double max_constraint_residual = 0.0;
    int max_newton_iterations = 0;
};

/// Nonlinear nonlocal upscaling of dS/dt + div(u lambda(S)) = q for a fixed
/// velocity field: each step maps coarse averages to fine-grid fields by
/// nonlinear constrained local solves, then advances the averages with a
/// finite-volume update whose interface fluxes are evaluated on the
/// upwind-side owner's field (each face computed once, so mass telescopes).
class NonlinearUpscaler {
  public:
    NonlinearUpscaler(const FineGrid& fg, const CoarseGrid& cg,
                      const ContinuumPartition& partition, const FluxField& u, int layers,
                      double eps, double beta, NewtonOptions newton = {})
        : fg_(&fg), cg_(&cg), partition_(&partition), u_(&u), layers_(layers), eps_(eps),
          lambda_{beta}, newton_(newton), volumes_(partition.volumes()) {
        global_ = (layers == layers_infinity) || (2 * layers + 1 >= 2 * cg.N1);
        if (global_) {
            regions_.push_back(oversample(fg, cg, 0, layers_infinity));
            region_of_coarse_.assign(cg.cell_count(), 0);
        } else {
            regions_.resize(cg.cell_count());
            region_of_coarse_.resize(cg.cell_count());
            for (int C = 0; C < cg.cell_count(); ++C) {
                regions_[C] = oversample(fg, cg, C, layers);
                region_of_coarse_[C] = C;
            }
        }
        build_face_uses();
    }

    const PowerFlux& flux_function() const { return lambda_; }
    int layers() const { return layers_; }

    /// Solves the local problems for the averages U (one entry per active
    /// continuum region, values expected in [0,1]).
    DownscaleMap downscale(const Eigen::VectorXd& U) const {
        DownscaleMap map;
        map.solution_of_coarse.resize(cg_->cell_count());
        if (global_) {
            map.solutions.resize(1);
            std::fill(map.solution_of_coarse.begin(), map.solution_of_coarse.end(), 0);
            ConstrainedLocalSolver solver(*fg_, regions_[0], *partition_,
                                          LocalOperator::convection(*u_, eps_));
            map.solutions[0] = solver.solve_newton(targets_for(solver, U), lambda_, newton_);
        } else {
            map.solutions.resize(cg_->cell_count());
            for (int C = 0; C < cg_->cell_count(); ++C) map.solution_of_coarse[C] = C;
            parallel_for(cg_->cell_count(), [&](int C) {
                ConstrainedLocalSolver solver(*fg_, regions_[C], *partition_,
                                              LocalOperator::convection(*u_, eps_));
                map.solutions[C] = solver.solve_newton(targets_for(solver, U), lambda_, newton_);
            });
        }
        for (const auto& sol : map.solutions) {
            map.max_constraint_residual =
                std::max(map.max_constraint_residual, sol.constraint_residual);
            map.max_newton_iterations = std::max(map.max_newton_iterations, sol.newton_iterations);
        }
        map.face_lambda.resize(face_uses_.size());
        for (size_t k = 0; k < face_uses_.size(); ++k) {
            const auto& use = face_uses_[k];
            const auto& sol = map.solutions[map.solution_of_coarse[use.owner_coarse]];
            map.face_lambda[k] = lambda_.value(sol.values[use.donor_local]);
        }
        return map;
    }

    /// Stable explicit step bound for the coarse update.
    double cfl_dt() const {
        std::vector<double> out(volumes_.size(), 0.0);
        for (const auto& use : face_uses_) out[use.donor_region] += use.absflux;
        double slope = std::max(1.0, lambda_.beta); // max lambda' on [0,1]
        double dt = std::numeric_limits<double>::infinity();
        for (size_t r = 0; r < volumes_.size(); ++r)
            if (out[r] > 0.0) dt = std::min(dt, 0.5 * volumes_[r] / (out[r] * slope));
        return dt;
    }

    /// Advances the averages: mean form of the region-boundary flux balance,
    /// with Q holding per-region source integrals.
    Eigen::VectorXd step(const DownscaleMap& map, const Eigen::VectorXd& U, double dt,
                         const Eigen::VectorXd& Q) const {
        double dt_max = cfl_dt();
        if (dt > dt_max * (1.0 + 1e-12))
            throw SolverError("coarse nonlinear step: dt " + std::to_string(dt) +
                              " violates CFL bound " + std::to_string(dt_max));
        Eigen::VectorXd out = U;
        for (size_t k = 0; k < face_uses_.size(); ++k) {
            const auto& use = face_uses_[k];
            double val = use.absflux * map.face_lambda[k];
            out[use.donor_region] -= dt * val / volumes_[use.donor_region];
            if (use.recv_region >= 0)
                out[use.recv_region] += dt * val / volumes_[use.recv_region];
        }
        for (int r = 0; r < out.size(); ++r) out[r] += dt * Q[r] / volumes_[r];
        return out;
    }

    /// Diagnostic fine-grid field: local solutions glued with normalized
    /// tent weights over their supports.
    ScalarField reconstruct(const DownscaleMap& map) const {
        ScalarField out(*fg_);
        const int N1 = cg_->N1;
        int reach = global_ ? N1 : layers_;
        for (int c = 0; c < fg_->cell_count(); ++c) {
            int home = cg_->coarse_of_fine(c);
            int hi = cg_->cell_i(home), hj = cg_->cell_j(home);
            double wsum = 0.0, val = 0.0;
            for (int J = std::max(0, hj - reach); J <= std::min(N1 - 1, hj + reach); ++J)
                for (int I = std::max(0, hi - reach); I <= std::min(N1 - 1, hi + reach); ++I) {
                    int C = cg_->cell(I, J);
                    const auto& region = regions_[region_of_coarse_[C]];
                    int l = region.local_of_fine[c];
                    if (l < 0) continue;
                    double d = static_cast<double>(cg_->distance(C, home));
                    double w = global_ ? 1.0 : std::max(0.0, 1.0 - d / (layers_ + 1.0));
                    if (w <= 0.0) continue;
                    val += w * map.solutions[map.solution_of_coarse[C]].values[l];
                    wsum += w;
                }
            out[c] = (wsum > 0.0) ? val / wsum : 0.0;
        }
        return out;
    }

  private:
    struct FaceUse {
        int donor_region;
        int recv_region; ///< -1 leaves the domain
        int owner_coarse;
        int donor_local;
        double absflux;
    };

    std::vector<double> targets_for(const ConstrainedLocalSolver& solver,
                                    const Eigen::VectorXd& U) const {
        std::vector<double> targets(solver.constraint_count());
        for (int k = 0; k < solver.constraint_count(); ++k) {
            int r = solver.constraint_regions()[k];
            targets[k] = U[r] * partition_->regions[r].volume;
        }
        return targets;
    }

    void build_face_uses() {
        for (int f = 0; f < fg_->face_count(); ++f) {
            double flux = (*u_)[f];
            if (flux == 0.0) continue;
            auto [cm, cp] = fg_->face_cells(f);
            int rm = cm >= 0 ? partition_->region_of_cell[cm] : -1;
            int rp = cp >= 0 ? partition_->region_of_cell[cp] : -1;
            if (rm == rp) continue;
            int donor = flux > 0.0 ? cm : cp;
            int recv_region = flux > 0.0 ? rp : rm;
            if (donor < 0) continue; // boundary inflow transports lambda(0) = 0
            FaceUse use;
            use.donor_region = partition_->region_of_cell[donor];
            use.recv_region = recv_region;
            use.owner_coarse = cg_->coarse_of_fine(donor);
            use.donor_local =
                regions_[region_of_coarse_[use.owner_coarse]].local_of_fine[donor];
            use.absflux = std::abs(flux);
            face_uses_.push_back(use);
        }
    }

    const FineGrid* fg_;
    const CoarseGrid* cg_;
    const ContinuumPartition* partition_;
    const FluxField* u_;
    int layers_;
    double eps_;
    PowerFlux lambda_;
    NewtonOptions newton_;
    std::vector<double> volumes_;
    bool global_ = false;
    std::vector<OversampleRegion> regions_;
    std::vector<int> region_of_coarse_;
    std::vector<FaceUse> face_uses_;
};

} // namespace nlmc
