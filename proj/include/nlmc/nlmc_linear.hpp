#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "nlmc/constrained_local.hpp"
#include "nlmc/continuum.hpp"
#include "nlmc/field.hpp"
#include "nlmc/grid.hpp"
#include "nlmc/parallel.hpp"

namespace nlmc {

/// Multiscale basis functions, one per active continuum region. Basis b is
/// supported on the oversampled region of its coarse cell and normalized to
/// mean one on its own region, mean zero on every other region inside the
/// support. When the oversampling covers the whole domain all bases share a
/// single region object.
struct BasisSet {
    int layers = 0;
    std::vector<OversampleRegion> regions;
    std::vector<int> region_of_coarse;        ///< coarse cell -> index into regions
    std::vector<std::vector<double>> values;  ///< per basis, local ordering of its region
    std::vector<int> support_of_basis;        ///< basis -> index into regions
    double max_constraint_residual = 0.0;

    int count() const { return static_cast<int>(values.size()); }

    const OversampleRegion& support(int b) const { return regions[support_of_basis[b]]; }

    double evaluate(int b, int fine_cell) const {
        int l = support(b).local_of_fine[fine_cell];
        return l >= 0 ? values[b][l] : 0.0;
    }
};

namespace detail {

inline BasisSet build_basis(const FineGrid& fg, const CoarseGrid& cg,
                            const ContinuumPartition& partition, const LocalOperator& op,
                            int layers) {
    BasisSet set;
    set.layers = layers;
    const int n_coarse = cg.cell_count();
    set.values.resize(partition.count());
    set.support_of_basis.resize(partition.count());
    set.region_of_coarse.resize(n_coarse);

    bool global = (layers == layers_infinity) ||
                  (2 * layers + 1 >= 2 * cg.N1); // box always covers the grid
    if (global) {
        set.regions.push_back(oversample(fg, cg, 0, layers_infinity));
        for (int C = 0; C < n_coarse; ++C) set.region_of_coarse[C] = 0;
        ConstrainedLocalSolver solver(fg, set.regions[0], partition, op);
        std::vector<double> residuals(partition.count(), 0.0);
        for (int r = 0; r < partition.count(); ++r) {
            std::vector<double> targets(solver.constraint_count(), 0.0);
            int pos = solver.position_of_region(r);
            targets[pos] = solver.integral_target(pos, 1.0);
            LocalSolution sol = solver.solve_linear(targets);
            set.values[r] = std::move(sol.values);
            set.support_of_basis[r] = 0;
            residuals[r] = sol.constraint_residual;
        }
        for (double r : residuals)
            set.max_constraint_residual = std::max(set.max_constraint_residual, r);
        return set;
    }

    set.regions.resize(n_coarse);
    for (int C = 0; C < n_coarse; ++C) set.region_of_coarse[C] = C;
    std::vector<double> residuals(n_coarse, 0.0);
    parallel_for(n_coarse, [&](int C) {
        set.regions[C] = oversample(fg, cg, C, layers);
        ConstrainedLocalSolver solver(fg, set.regions[C], partition, op);
        for (int r : partition.regions_of_coarse[C]) {
            std::vector<double> targets(solver.constraint_count(), 0.0);
            int pos = solver.position_of_region(r);
            targets[pos] = solver.integral_target(pos, 1.0);
            LocalSolution sol = solver.solve_linear(targets);
            set.values[r] = std::move(sol.values);
            set.support_of_basis[r] = C;
            residuals[C] = std::max(residuals[C], sol.constraint_residual);
        }
    });
    for (double r : residuals)
        set.max_constraint_residual = std::max(set.max_constraint_residual, r);
    return set;
}

} // namespace detail

/// Energy-minimizing diffusion bases for -div(kappa grad .).
inline BasisSet build_diffusion_basis(const FineGrid& fg, const CoarseGrid& cg,
                                      const ContinuumPartition& partition,
                                      const ScalarField& kappa, int layers) {
    return detail::build_basis(fg, cg, partition, LocalOperator::diffusion(kappa), layers);
}

/// Transport bases for div(u .), stabilized with an artificial-diffusion
/// transmissibility eps.
inline BasisSet build_transport_basis(const FineGrid& fg, const CoarseGrid& cg,
                                      const ContinuumPartition& partition, const FluxField& u,
                                      int layers, double eps) {
    return detail::build_basis(fg, cg, partition, LocalOperator::convection(u, eps), layers);
}

/// Sum of basis functions weighted by coarse values.
inline ScalarField reconstruct(const FineGrid& fg, const BasisSet& basis,
                               const Eigen::VectorXd& U) {
    ScalarField out(fg);
    for (int b = 0; b < basis.count(); ++b) {
        const auto& region = basis.support(b);
        const auto& vals = basis.values[b];
        for (int l = 0; l < region.size(); ++l)
            out[region.fine_cells[l]] += U[b] * vals[l];
    }
    return out;
}

/// Upscaled coarse system. With indicator test functions the mass matrix is
/// the diagonal of region volumes; the Galerkin variant carries full mass
/// and stiffness matrices.
struct UpscaledSystem {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd M_diag;
    Eigen::SparseMatrix<double> M; ///< Galerkin only
    bool galerkin = false;
};

/// Petrov-Galerkin assembly of the transport operator: row (i,j) integrates
/// div(u * basis) over continuum region (i,j). Column sums telescope to the
/// domain-boundary flux, so no-flow closures conserve mass exactly.
inline UpscaledSystem assemble_upscaled(const FineGrid& fg, const ContinuumPartition& partition,
                                        const BasisSet& basis, const FluxField& u) {
    UpscaledSystem sys;
    const int n = partition.count();
    std::vector<Eigen::Triplet<double>> trip;
    for (int b = 0; b < n; ++b) {
        const auto& region = basis.support(b);
        const auto& vals = basis.values[b];
        // Only faces whose donor cell lies in the support contribute; visit
        // each such face once, at its donor cell.
        for (int l = 0; l < region.size(); ++l) {
            int c = region.fine_cells[l];
            double psi = vals[l];
            if (psi == 0.0) continue;
            for (int f : fg.cell_faces(c)) {
                double flux = u[f];
                if (flux == 0.0) continue;
                auto [cm, cp] = fg.face_cells(f);
                int donor = flux > 0.0 ? cm : cp;
                if (donor != c) continue;
                double val = flux * psi;
                int rm = cm >= 0 ? partition.region_of_cell[cm] : -1;
                int rp = cp >= 0 ? partition.region_of_cell[cp] : -1;
                if (rm == rp) continue;
                if (rm >= 0) trip.emplace_back(rm, b, val);
                if (rp >= 0) trip.emplace_back(rp, b, -val);
            }
        }
    }
    sys.A.resize(n, n);
    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.M_diag.resize(n);
    for (int r = 0; r < n; ++r) sys.M_diag[r] = partition.regions[r].volume;
    return sys;
}

/// Galerkin stiffness/mass for the diffusion operator over materialized
/// bases; quadratic in the basis count and meant for small verification
/// problems.
inline UpscaledSystem assemble_upscaled_galerkin(const FineGrid& fg,
                                                 const ContinuumPartition& partition,
                                                 const BasisSet& basis,
                                                 const ScalarField& kappa) {
    UpscaledSystem sys;
    sys.galerkin = true;
    const int n = partition.count();
    const double area = fg.h * fg.h;

    std::vector<std::vector<double>> full(n);
    for (int b = 0; b < n; ++b) {
        full[b].assign(fg.cell_count(), 0.0);
        const auto& region = basis.support(b);
        for (int l = 0; l < region.size(); ++l)
            full[b][region.fine_cells[l]] = basis.values[b][l];
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        double T;
        if (cm >= 0 && cp >= 0)
            T = detail::harmonic(kappa[cm], kappa[cp]);
        else
            T = 2.0 * kappa[cm >= 0 ? cm : cp]; // zero boundary value
        for (int a = 0; a < n; ++a) {
            double ja = (cp >= 0 ? full[a][cp] : 0.0) - (cm >= 0 ? full[a][cm] : 0.0);
            if (ja == 0.0) continue;
            for (int b = 0; b < n; ++b) {
                double jb = (cp >= 0 ? full[b][cp] : 0.0) - (cm >= 0 ? full[b][cm] : 0.0);
                if (jb != 0.0) A(a, b) += T * ja * jb;
            }
        }
    }
    for (int c = 0; c < fg.cell_count(); ++c)
        for (int a = 0; a < n; ++a) {
            if (full[a][c] == 0.0) continue;
            for (int b = 0; b < n; ++b)
                if (full[b][c] != 0.0) M(a, b) += area * full[a][c] * full[b][c];
        }

    sys.A = A.sparseView();
    sys.M = M.sparseView();
    sys.M_diag.resize(n);
    for (int r = 0; r < n; ++r) sys.M_diag[r] = partition.regions[r].volume;
    return sys;
}

struct CoarseState {
    Eigen::VectorXd values;
    double time = 0.0;
};

/// Largest stable explicit step for an assembled coarse operator.
inline double coarse_cfl_dt(const UpscaledSystem& sys, double slope_bound = 1.0) {
    double dt = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(sys.A.rows());
    for (int k = 0; k < sys.A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(sys.A, k); it; ++it)
            row_abs[it.row()] += std::abs(it.value());
    for (int r = 0; r < sys.A.rows(); ++r)
        if (row_abs[r] > 0.0)
            dt = std::min(dt, 0.5 * sys.M_diag[r] / (row_abs[r] * slope_bound));
    return dt;
}

/// Explicit coarse update M (U' - U) + dt A U = dt G, with G given as
/// integrals of the source over continuum regions.
inline CoarseState step_coarse(const UpscaledSystem& sys, const CoarseState& state, double dt,
                               const Eigen::VectorXd& G) {
    double dt_max = coarse_cfl_dt(sys);
    if (dt > dt_max * (1.0 + 1e-12))
        throw SolverError("step_coarse: dt " + std::to_string(dt) + " violates coarse CFL bound " +
                          std::to_string(dt_max));
    CoarseState next;
    Eigen::VectorXd rhs = sys.A * state.values - G;
    next.values = state.values - dt * rhs.cwiseQuotient(sys.M_diag);
    next.time = state.time + dt;
    return next;
}

/// Implicit variant for stiff (diffusion) coarse operators.
inline CoarseState step_coarse_implicit(const UpscaledSystem& sys, const CoarseState& state,
                                        double dt, const Eigen::VectorXd& G) {
    const int n = static_cast<int>(state.values.size());
    Eigen::SparseMatrix<double> lhs = sys.A * dt;
    Eigen::VectorXd rhs = dt * G;
    if (sys.galerkin) {
        lhs += sys.M;
        rhs += sys.M * state.values;
    } else {
        Eigen::SparseMatrix<double> M(n, n);
        std::vector<Eigen::Triplet<double>> trip;
        for (int r = 0; r < n; ++r) trip.emplace_back(r, r, sys.M_diag[r]);
        M.setFromTriplets(trip.begin(), trip.end());
        lhs += M;
        rhs += sys.M_diag.cwiseProduct(state.values);
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(lhs);
    if (lu.info() != Eigen::Success)
        throw SolverError("step_coarse_implicit: factorization failed");
    CoarseState next;
    next.values = lu.solve(rhs);
    next.time = state.time + dt;
    return next;
}

/// Dual-continuum upwind finite-volume baseline on the coarse grid: one
/// unknown per continuum region, inter-region fluxes obtained by integrating
/// the fine flux field over shared interface segments and upwinding the
/// coarse averages.
class CoarseFV {
  public:
    CoarseFV(const FineGrid& fg, const ContinuumPartition& partition, const FluxField& u)
        : volumes_(partition.volumes()) {
        std::map<std::pair<int, int>, double> agg;
        for (int f = 0; f < fg.face_count(); ++f) {
            double flux = u[f];
            if (flux == 0.0) continue;
            auto [cm, cp] = fg.face_cells(f);
            int rm = cm >= 0 ? partition.region_of_cell[cm] : -1;
            int rp = cp >= 0 ? partition.region_of_cell[cp] : -1;
            if (rm == rp) continue;
            int donor = flux > 0.0 ? rm : rp;
            int recv = flux > 0.0 ? rp : rm;
            if (donor < 0) continue; // boundary inflow carries nothing
            agg[{donor, recv}] += std::abs(flux);
        }
        for (const auto& [key, flux] : agg)
            pairs_.push_back({key.first, key.second, flux});
    }

    int count() const { return static_cast<int>(volumes_.size()); }

    double cfl_dt(double slope_bound = 1.0) const {
        std::vector<double> out(volumes_.size(), 0.0);
        for (const auto& p : pairs_) out[p.donor] += p.flux;
        double dt = std::numeric_limits<double>::infinity();
        for (size_t r = 0; r < volumes_.size(); ++r)
            if (out[r] > 0.0) dt = std::min(dt, 0.5 * volumes_[r] / (out[r] * slope_bound));
        return dt;
    }

    /// One explicit upwind step; lambda maps the donor average to the
    /// transported value and Q holds per-region source integrals.
    Eigen::VectorXd step(const Eigen::VectorXd& U, double dt,
                         const std::function<double(double)>& lambda,
                         const Eigen::VectorXd& Q) const {
        Eigen::VectorXd out = U;
        for (const auto& p : pairs_) {
            double val = p.flux * lambda(U[p.donor]);
            out[p.donor] -= dt * val / volumes_[p.donor];
            if (p.recv >= 0) out[p.recv] += dt * val / volumes_[p.recv];
        }
        for (int r = 0; r < out.size(); ++r) out[r] += dt * Q[r] / volumes_[r];
        return out;
    }

  private:
    struct Pair {
        int donor;
        int recv; ///< -1 leaves the domain
        double flux;
    };
    std::vector<Pair> pairs_;
    std::vector<double> volumes_;
};

/// Source integrals over continuum regions for injection/production wells;
/// mirrors the fine-grid composition rule.
inline Eigen::VectorXd compose_coarse_well_source(const FineGrid& fg,
                                                  const ContinuumPartition& partition,
                                                  const ScalarField& q, const Eigen::VectorXd& U,
                                                  const std::function<double(double)>& lambda,
                                                  double injected_value) {
    Eigen::VectorXd G = Eigen::VectorXd::Zero(partition.count());
    const double area = fg.h * fg.h;
    for (int c = 0; c < fg.cell_count(); ++c) {
        if (q[c] == 0.0) continue;
        int r = partition.region_of_cell[c];
        if (q[c] > 0.0)
            G[r] += q[c] * area * lambda(injected_value);
        else
            G[r] += q[c] * area * lambda(U[r]);
    }
    return G;
}

} // namespace nlmc
