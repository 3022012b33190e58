#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "nlmc/continuum.hpp"
#include "nlmc/errors.hpp"
#include "nlmc/field.hpp"
#include "nlmc/grid.hpp"
#include "nlmc/mobility.hpp"

namespace nlmc {

/// Operator discretized inside a local constrained solve.
///
/// Convection: upwind div(u .) plus an artificial-diffusion transmissibility
/// eps. The stabilization uses a no-flux closure where the region boundary
/// coincides with the domain boundary (the global problem is no-flow there)
/// and zero-value ghosts on the sampling boundary inside the domain, so a
/// whole-domain region reproduces the global operator exactly.
///
/// Diffusion: two-point flux approximation of -div(kappa grad .) with
/// zero-value ghosts on the entire region boundary.
struct LocalOperator {
    enum class Kind { Convection, Diffusion };
    Kind kind = Kind::Convection;
    const FluxField* flux = nullptr;
    double eps = 0.0;
    const ScalarField* kappa = nullptr;

    static LocalOperator convection(const FluxField& u, double eps) {
        LocalOperator op;
        op.kind = Kind::Convection;
        op.flux = &u;
        op.eps = eps;
        return op;
    }
    static LocalOperator diffusion(const ScalarField& kappa) {
        LocalOperator op;
        op.kind = Kind::Diffusion;
        op.kappa = &kappa;
        return op;
    }
};

/// Artificial-diffusion transmissibility for a given flux field; scales with
/// the upwind numerical viscosity of the fastest face.
inline double artificial_diffusion(const FluxField& u, double eps_scale) {
    return eps_scale * u.max_abs();
}

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 50;
    int max_halvings = 30;
};

struct LocalSolution {
    std::vector<double> values;      ///< per region cell, local ordering
    std::vector<double> multipliers; ///< per constraint
    int newton_iterations = 0;
    double constraint_residual = 0.0;       ///< max |mean - target mean|
    std::vector<double> residual_history;   ///< Newton residual norms
};

/// Saddle-point solver for one oversampled region: the discretized operator
/// with per-continuum-region mean constraints enforced through Lagrange
/// multipliers. One constraint is generated for every continuum region whose
/// coarse cell lies in the oversample, in partition order.
///
/// Instances are not thread-safe; build one per worker. Construction is
/// cheap relative to factorization, which is cached across solves.
class ConstrainedLocalSolver {
  public:
    ConstrainedLocalSolver(const FineGrid& fg, const OversampleRegion& region,
                           const ContinuumPartition& partition, const LocalOperator& op)
        : fg_(&fg), region_(&region), partition_(&partition), op_(op) {
        build_constraints();
        build_faces();
        assemble_linear();
        lu_.analyzePattern(saddle_);
    }

    int cell_count() const { return region_->size(); }
    int constraint_count() const { return static_cast<int>(constraint_regions_.size()); }
    const std::vector<int>& constraint_regions() const { return constraint_regions_; }

    /// Position of a partition region in the constraint ordering, -1 if the
    /// region lies outside the oversample.
    int position_of_region(int partition_region) const {
        for (size_t k = 0; k < constraint_regions_.size(); ++k)
            if (constraint_regions_[k] == partition_region) return static_cast<int>(k);
        return -1;
    }

    /// Integral target for prescribing a region mean.
    double integral_target(int position, double mean) const {
        return mean * partition_->regions[constraint_regions_[position]].volume;
    }

    /// Solves the linear constrained problem for the given integral targets.
    /// High contrast makes the saddle matrix ill-conditioned, so the direct
    /// solve is polished by iterative refinement.
    LocalSolution solve_linear(const std::vector<double>& targets) {
        require_targets(targets);
        factorize_linear();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim());
        for (int k = 0; k < constraint_count(); ++k) rhs[cell_count() + k] = targets[k];
        Eigen::VectorXd x = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success)
            throw SolverError(context() + ": saddle solve failed");
        for (int pass = 0; pass < 3; ++pass) {
            Eigen::VectorXd r = rhs - saddle_ * x;
            if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * rhs.lpNorm<Eigen::Infinity>()) break;
            x += lu_.solve(r);
        }
        return extract(x, targets, 0, {});
    }

    /// Damped Newton iteration for the nonlinear flux lambda(.) applied to
    /// the convection operator. Mean constraints are linear rows, so any
    /// iterate started from a constraint-satisfying guess keeps them exact.
    LocalSolution solve_newton(const std::vector<double>& targets, const PowerFlux& lambda,
                               const NewtonOptions& opts) {
        require_targets(targets);
        if (op_.kind != LocalOperator::Kind::Convection)
            throw SolverError(context() + ": nonlinear solve needs a convection operator");

        Eigen::VectorXd x = Eigen::VectorXd::Zero(dim());
        for (int k = 0; k < constraint_count(); ++k) {
            const auto& reg = partition_->regions[constraint_regions_[k]];
            double mean = targets[k] / reg.volume;
            for (int c : reg.cells) x[region_->local_of_fine[c]] = mean;
        }

        std::vector<double> history;
        Eigen::VectorXd res(dim());
        residual(x, targets, lambda, res);
        double norm = res.lpNorm<Eigen::Infinity>();
        history.push_back(norm);

        int it = 0;
        while (norm > opts.tol) {
            if (it >= opts.max_iter) {
                std::string msg = context() + ": Newton stalled after " +
                                  std::to_string(it) + " iterations; residuals:";
                for (double r : history) msg += " " + std::to_string(r);
                throw SolverError(msg);
            }
            jacobian(x, lambda);
            lu_.factorize(saddle_);
            factorized_linear_ = false;
            if (lu_.info() != Eigen::Success)
                throw SolverError(context() + ": singular Newton Jacobian");
            Eigen::VectorXd step = lu_.solve(-res);

            double alpha = 1.0;
            Eigen::VectorXd trial(dim()), trial_res(dim());
            double trial_norm = norm;
            for (int halving = 0; halving <= opts.max_halvings; ++halving) {
                trial = x + alpha * step;
                residual(trial, targets, lambda, trial_res);
                trial_norm = trial_res.lpNorm<Eigen::Infinity>();
                if (trial_norm < norm) break;
                alpha *= 0.5;
            }
            x = trial;
            res = trial_res;
            norm = trial_norm;
            history.push_back(norm);
            ++it;
        }
        return extract(x, targets, it, history);
    }

  private:
    struct FaceTerm {
        int lm = -1;    ///< local cell on the negative side, -1 outside region
        int lp = -1;
        double flux = 0.0;
        double trans = 0.0; ///< diffusive transmissibility (ghost closure included)
    };

    int dim() const { return cell_count() + constraint_count(); }

    std::string context() const {
        return "local solve at coarse cell " + std::to_string(region_->center);
    }

    void require_targets(const std::vector<double>& targets) const {
        if (static_cast<int>(targets.size()) != constraint_count())
            throw SolverError(context() + ": expected " + std::to_string(constraint_count()) +
                              " targets, got " + std::to_string(targets.size()));
    }

    void build_constraints() {
        for (int C : region_->coarse_cells)
            for (int r : partition_->regions_of_coarse[C]) constraint_regions_.push_back(r);
    }

    void build_faces() {
        for (int f = 0; f < fg_->face_count(); ++f) {
            auto [cm, cp] = fg_->face_cells(f);
            int lm = (cm >= 0) ? region_->local_of_fine[cm] : -1;
            int lp = (cp >= 0) ? region_->local_of_fine[cp] : -1;
            if (lm < 0 && lp < 0) continue;
            FaceTerm t;
            t.lm = lm;
            t.lp = lp;
            bool domain_boundary = (cm < 0 || cp < 0);
            if (op_.kind == LocalOperator::Kind::Convection) {
                t.flux = (*op_.flux)[f];
                t.trans = domain_boundary ? 0.0 : op_.eps;
            } else {
                const ScalarField& k = *op_.kappa;
                if (domain_boundary)
                    t.trans = 2.0 * k[cm >= 0 ? cm : cp];
                else
                    t.trans = detail::harmonic(k[cm], k[cp]);
            }
            if (t.flux == 0.0 && t.trans == 0.0) continue;
            faces_.push_back(t);
        }
    }

    void add_diffusion(std::vector<Eigen::Triplet<double>>& trip, const FaceTerm& t) const {
        if (t.trans == 0.0) return;
        if (t.lm >= 0 && t.lp >= 0) {
            trip.emplace_back(t.lm, t.lm, t.trans);
            trip.emplace_back(t.lm, t.lp, -t.trans);
            trip.emplace_back(t.lp, t.lp, t.trans);
            trip.emplace_back(t.lp, t.lm, -t.trans);
        } else if (t.lm >= 0) {
            trip.emplace_back(t.lm, t.lm, t.trans);
        } else {
            trip.emplace_back(t.lp, t.lp, t.trans);
        }
    }

    void add_coupling(std::vector<Eigen::Triplet<double>>& trip) const {
        const double area = fg_->h * fg_->h;
        for (int k = 0; k < constraint_count(); ++k) {
            const auto& reg = partition_->regions[constraint_regions_[k]];
            for (int c : reg.cells) {
                int l = region_->local_of_fine[c];
                trip.emplace_back(l, cell_count() + k, area);
                trip.emplace_back(cell_count() + k, l, area);
            }
        }
    }

    /// Linear saddle matrix; also the Newton Jacobian pattern.
    void assemble_linear() {
        std::vector<Eigen::Triplet<double>> trip;
        for (const auto& t : faces_) {
            if (t.flux != 0.0) {
                int donor = t.flux > 0.0 ? t.lm : t.lp;
                if (donor >= 0) {
                    if (t.lm >= 0) trip.emplace_back(t.lm, donor, t.flux);
                    if (t.lp >= 0) trip.emplace_back(t.lp, donor, -t.flux);
                }
            }
            add_diffusion(trip, t);
        }
        add_coupling(trip);
        saddle_.resize(dim(), dim());
        saddle_.setFromTriplets(trip.begin(), trip.end());
        linear_saddle_ = saddle_;
    }

    void factorize_linear() {
        if (factorized_linear_) return;
        saddle_ = linear_saddle_;
        lu_.factorize(saddle_);
        if (lu_.info() != Eigen::Success)
            throw SolverError(context() + ": singular saddle matrix (empty continuum or "
                                          "vanishing stabilization)");
        factorized_linear_ = true;
    }

    void residual(const Eigen::VectorXd& x, const std::vector<double>& targets,
                  const PowerFlux& lambda, Eigen::VectorXd& res) const {
        res.setZero();
        for (const auto& t : faces_) {
            if (t.flux != 0.0) {
                int donor = t.flux > 0.0 ? t.lm : t.lp;
                double val = donor >= 0 ? t.flux * lambda.value(x[donor]) : 0.0;
                if (val != 0.0) {
                    if (t.lm >= 0) res[t.lm] += val;
                    if (t.lp >= 0) res[t.lp] -= val;
                }
            }
            if (t.trans != 0.0) {
                if (t.lm >= 0 && t.lp >= 0) {
                    double d = t.trans * (x[t.lm] - x[t.lp]);
                    res[t.lm] += d;
                    res[t.lp] -= d;
                } else if (t.lm >= 0) {
                    res[t.lm] += t.trans * x[t.lm];
                } else {
                    res[t.lp] += t.trans * x[t.lp];
                }
            }
        }
        const double area = fg_->h * fg_->h;
        for (int k = 0; k < constraint_count(); ++k) {
            const auto& reg = partition_->regions[constraint_regions_[k]];
            double mu = x[cell_count() + k];
            double integral = 0.0;
            for (int c : reg.cells) {
                int l = region_->local_of_fine[c];
                res[l] += mu * area;
                integral += x[l] * area;
            }
            res[cell_count() + k] = integral - targets[k];
        }
    }

    void jacobian(const Eigen::VectorXd& x, const PowerFlux& lambda) {
        std::vector<Eigen::Triplet<double>> trip;
        for (const auto& t : faces_) {
            if (t.flux != 0.0) {
                int donor = t.flux > 0.0 ? t.lm : t.lp;
                if (donor >= 0) {
                    double d = t.flux * lambda.slope(x[donor]);
                    if (t.lm >= 0) trip.emplace_back(t.lm, donor, d);
                    if (t.lp >= 0) trip.emplace_back(t.lp, donor, -d);
                }
            }
            add_diffusion(trip, t);
        }
        add_coupling(trip);
        saddle_.setFromTriplets(trip.begin(), trip.end());
    }

    LocalSolution extract(const Eigen::VectorXd& x, const std::vector<double>& targets,
                          int iterations, std::vector<double> history) const {
        LocalSolution sol;
        sol.values.assign(x.data(), x.data() + cell_count());
        sol.multipliers.assign(x.data() + cell_count(), x.data() + dim());
        sol.newton_iterations = iterations;
        sol.residual_history = std::move(history);
        const double area = fg_->h * fg_->h;
        for (int k = 0; k < constraint_count(); ++k) {
            const auto& reg = partition_->regions[constraint_regions_[k]];
            double integral = 0.0;
            for (int c : reg.cells) integral += sol.values[region_->local_of_fine[c]] * area;
            sol.constraint_residual = std::max(sol.constraint_residual,
                                               std::abs(integral - targets[k]) / reg.volume);
        }
        return sol;
    }

    const FineGrid* fg_;
    const OversampleRegion* region_;
    const ContinuumPartition* partition_;
    LocalOperator op_;
    std::vector<int> constraint_regions_;
    std::vector<FaceTerm> faces_;
    Eigen::SparseMatrix<double> saddle_;
    Eigen::SparseMatrix<double> linear_saddle_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    bool factorized_linear_ = false;
};

/// One-shot problem description mirroring the solver entry points.
struct LocalProblem {
    const FineGrid* fg = nullptr;
    const OversampleRegion* region = nullptr;
    const ContinuumPartition* partition = nullptr;
    LocalOperator op;
    std::vector<double> targets; ///< integral targets in constraint order
};

inline LocalSolution solve_linear_constrained(const LocalProblem& lp) {
    ConstrainedLocalSolver solver(*lp.fg, *lp.region, *lp.partition, lp.op);
    return solver.solve_linear(lp.targets);
}

inline LocalSolution solve_nonlinear_constrained(const LocalProblem& lp, const PowerFlux& lambda,
                                                 const NewtonOptions& opts = {}) {
    ConstrainedLocalSolver solver(*lp.fg, *lp.region, *lp.partition, lp.op);
    return solver.solve_newton(lp.targets, lambda, opts);
}

} // namespace nlmc
