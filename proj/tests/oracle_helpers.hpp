// Test-only reference implementations, kept independent of the library's
// solver paths: dense factorizations, straight-line scalar loops and
// fixed-point iterations used as oracles.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "nlmc/constrained_local.hpp"
#include "nlmc/continuum.hpp"
#include "nlmc/field.hpp"
#include "nlmc/grid.hpp"

namespace oracle {

using nlmc::ContinuumPartition;
using nlmc::FineGrid;
using nlmc::FluxField;
using nlmc::OversampleRegion;
using nlmc::ScalarField;

/// Divergence-free flux with zero normal component on the boundary, built
/// from a vertex stream function: exact to machine precision by telescoping.
inline FluxField stream_function_flux(const FineGrid& fg,
                                      const std::function<double(double, double)>& psi) {
    FluxField u(fg);
    auto vertex = [&](int i, int j) { return psi(i * fg.h, j * fg.h); };
    for (int j = 0; j < fg.ny; ++j)
        for (int i = 0; i <= fg.nx; ++i)
            u[fg.x_face(i, j)] = vertex(i, j + 1) - vertex(i, j);
    for (int j = 0; j <= fg.ny; ++j)
        for (int i = 0; i < fg.nx; ++i)
            u[fg.y_face(i, j)] = -(vertex(i + 1, j) - vertex(i, j));
    return u;
}

/// Uniform rightward flux through every x-face (boundary included).
inline FluxField uniform_x_flux(const FineGrid& fg, double face_rate) {
    FluxField u(fg);
    for (int j = 0; j < fg.ny; ++j)
        for (int i = 0; i <= fg.nx; ++i) u[fg.x_face(i, j)] = face_rate;
    return u;
}

/// Dense TPFA pressure solve, written as an independent i/j loop, grounded
/// at cell zero and shifted to zero mean.
inline ScalarField dense_darcy_pressure(const FineGrid& fg, const ScalarField& cond,
                                        const ScalarField& q) {
    const int n = fg.cell_count();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    auto harm = [](double x, double y) { return 2.0 * x * y / (x + y); };
    for (int j = 0; j < fg.ny; ++j)
        for (int i = 0; i < fg.nx; ++i) {
            int c = j * fg.nx + i;
            b[c] = q[c] * fg.h * fg.h;
            if (i + 1 < fg.nx) {
                int r = c + 1;
                double T = harm(cond[c], cond[r]);
                A(c, c) += T;
                A(r, r) += T;
                A(c, r) -= T;
                A(r, c) -= T;
            }
            if (j + 1 < fg.ny) {
                int r = c + fg.nx;
                double T = harm(cond[c], cond[r]);
                A(c, c) += T;
                A(r, r) += T;
                A(c, r) -= T;
                A(r, c) -= T;
            }
        }
    A.row(0).setZero();
    A.col(0).setZero();
    A(0, 0) = 1.0;
    b[0] = 0.0;
    Eigen::VectorXd p = A.partialPivLu().solve(b);
    p.array() -= p.mean();
    ScalarField out(fg);
    for (int c = 0; c < n; ++c) out[c] = p[c];
    return out;
}

/// One explicit upwind transport step as a plain per-cell scalar loop.
inline ScalarField scalar_loop_transport_step(const FineGrid& fg, const FluxField& u,
                                              const ScalarField& S,
                                              const std::function<double(double)>& lambda,
                                              double dt, const ScalarField& q_w) {
    ScalarField out = S;
    double area = fg.h * fg.h;
    auto upwind = [&](double flux, int from, int to) {
        int donor = flux > 0.0 ? from : to;
        return donor >= 0 ? lambda(S[donor]) : lambda(0.0);
    };
    for (int j = 0; j < fg.ny; ++j)
        for (int i = 0; i < fg.nx; ++i) {
            int c = j * fg.nx + i;
            double net = 0.0;
            double fl = u[fg.x_face(i, j)];
            net += fl * upwind(fl, i > 0 ? c - 1 : -1, c); // inflow through the left face
            fl = u[fg.x_face(i + 1, j)];
            net -= fl * upwind(fl, c, i + 1 < fg.nx ? c + 1 : -1);
            fl = u[fg.y_face(i, j)];
            net += fl * upwind(fl, j > 0 ? c - fg.nx : -1, c);
            fl = u[fg.y_face(i, j + 1)];
            net -= fl * upwind(fl, c, j + 1 < fg.ny ? c + fg.nx : -1);
            out[c] += dt / area * net + dt * q_w[c];
        }
    return out;
}

/// Dense factorization of the full constrained saddle system
/// [A B^T; B 0][psi; mu] = [0; c] with the same upwind/stabilized
/// discretization, assembled by direct loops.
inline std::vector<double> dense_saddle_transport(const FineGrid& fg,
                                                  const OversampleRegion& region,
                                                  const ContinuumPartition& partition,
                                                  const FluxField& u, double eps,
                                                  const std::vector<double>& targets) {
    const int n = region.size();
    std::vector<int> constraint_regions;
    for (int C : region.coarse_cells)
        for (int r : partition.regions_of_coarse[C]) constraint_regions.push_back(r);
    const int m = static_cast<int>(constraint_regions.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);

    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        int lm = cm >= 0 ? region.local_of_fine[cm] : -1;
        int lp = cp >= 0 ? region.local_of_fine[cp] : -1;
        if (lm < 0 && lp < 0) continue;
        double flux = u[f];
        if (flux != 0.0) {
            int donor = flux > 0.0 ? lm : lp;
            if (donor >= 0) {
                if (lm >= 0) M(lm, donor) += flux;
                if (lp >= 0) M(lp, donor) -= flux;
            }
        }
        bool domain_boundary = (cm < 0 || cp < 0);
        if (domain_boundary) continue; // stabilization is no-flux on the outer boundary
        if (lm >= 0 && lp >= 0) {
            M(lm, lm) += eps;
            M(lm, lp) -= eps;
            M(lp, lp) += eps;
            M(lp, lm) -= eps;
        } else if (lm >= 0) {
            M(lm, lm) += eps;
        } else {
            M(lp, lp) += eps;
        }
    }
    double area = fg.h * fg.h;
    for (int k = 0; k < m; ++k) {
        for (int c : partition.regions[constraint_regions[k]].cells) {
            int l = region.local_of_fine[c];
            M(l, n + k) += area;
            M(n + k, l) += area;
        }
        rhs[n + k] = targets[k];
    }
    Eigen::VectorXd x = M.partialPivLu().solve(rhs);
    return std::vector<double>(x.data(), x.data() + n);
}

/// Damped Picard iteration for the nonlinear constrained problem: each pass
/// solves the linear constrained problem with face fluxes weighted by
/// lambda(N)/N of the previous donor values.
inline std::vector<double> fixed_point_nonlinear(const FineGrid& fg,
                                                 const OversampleRegion& region,
                                                 const ContinuumPartition& partition,
                                                 const FluxField& u, double eps, double beta,
                                                 const std::vector<double>& targets,
                                                 double tol = 1e-12, double damping = 0.5,
                                                 int max_iter = 400) {
    std::vector<int> constraint_regions;
    for (int C : region.coarse_cells)
        for (int r : partition.regions_of_coarse[C]) constraint_regions.push_back(r);

    std::vector<double> N(region.size(), 0.0);
    for (size_t k = 0; k < constraint_regions.size(); ++k) {
        const auto& reg = partition.regions[constraint_regions[k]];
        for (int c : reg.cells) N[region.local_of_fine[c]] = targets[k] / reg.volume;
    }

    for (int it = 0; it < max_iter; ++it) {
        FluxField weighted(fg);
        for (int f = 0; f < fg.face_count(); ++f) {
            double flux = u[f];
            if (flux == 0.0) continue;
            auto [cm, cp] = fg.face_cells(f);
            int donor = flux > 0.0 ? cm : cp;
            int dl = donor >= 0 ? region.local_of_fine[donor] : -1;
            double w = dl >= 0 ? std::pow(std::max(N[dl], 0.0), beta - 1.0) : 0.0;
            weighted[f] = flux * w;
        }
        nlmc::LocalProblem lp;
        lp.fg = &fg;
        lp.region = &region;
        lp.partition = &partition;
        lp.op = nlmc::LocalOperator::convection(weighted, eps);
        lp.targets = targets;
        nlmc::LocalSolution sol = nlmc::solve_linear_constrained(lp);

        double diff = 0.0;
        for (size_t i = 0; i < N.size(); ++i) {
            double next = (1.0 - damping) * N[i] + damping * sol.values[i];
            diff = std::max(diff, std::abs(next - N[i]));
            N[i] = next;
        }
        if (diff <= tol) break;
    }
    return N;
}

} // namespace oracle
