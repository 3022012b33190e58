#pragma once

#include <algorithm>
#include <cmath>

#include "nlmc/config.hpp"

namespace nlmc {

/// Power-law flux function S^beta on [0,inf), extended linearly below zero
/// with slope lambda'(0+) so that beta=1 stays exactly linear on all of R
/// and the Newton Jacobian is defined for undershooting iterates.
struct PowerFlux {
    double beta = 1.0;

    double value(double s) const {
        if (s < 0.0) return (beta == 1.0) ? s : 0.0;
        return std::pow(s, beta);
    }
    double slope(double s) const {
        if (s <= 0.0) return (beta == 1.0) ? 1.0 : 0.0;
        return beta * std::pow(s, beta - 1.0);
    }
};

/// Two-phase mobility interface: water/oil relative mobilities of the water
/// saturation. frac_w is the water fractional flow lambda_w / lambda_t.
struct MobilityModel {
    virtual ~MobilityModel() = default;
    virtual double lambda_w(double s) const = 0;
    virtual double lambda_o(double s) const = 0;
    double lambda_t(double s) const { return lambda_w(s) + lambda_o(s); }
    double frac_w(double s) const { return lambda_w(s) / lambda_t(s); }

    virtual double s_min() const = 0; ///< immobile-water bound
    virtual double s_max() const = 0; ///< 1 - residual oil

    /// Largest |d frac_w / dS| over the physical range, sampled; feeds the
    /// transport CFL bound.
    double max_frac_slope() const {
        const int n = 4096;
        double lo = s_min(), hi = s_max();
        double m = 0.0, prev = frac_w(lo);
        for (int k = 1; k <= n; ++k) {
            double s = lo + (hi - lo) * k / n;
            double cur = frac_w(s);
            m = std::max(m, std::abs(cur - prev) / ((hi - lo) / n));
            prev = cur;
        }
        return m;
    }
};

struct CoreyMobility final : MobilityModel {
    CoreyParams p;

    explicit CoreyMobility(const CoreyParams& params) : p(params) {}

    double clamp(double s) const { return std::clamp(s, p.swc, 1.0 - p.sor); }

    double lambda_w(double s) const override {
        double se = (clamp(s) - p.swc) / (1.0 - p.swc - p.sor);
        return se * se / p.muw;
    }
    double lambda_o(double s) const override {
        double se = (1.0 - clamp(s) - p.sor) / (1.0 - p.swc - p.sor);
        return se * se / p.muo;
    }
    double s_min() const override { return p.swc; }
    double s_max() const override { return 1.0 - p.sor; }
};

/// Unit-total-mobility model (lambda_w = S, lambda_o = 1 - S); collapses the
/// two-phase scheme onto single-phase linear transport.
struct LinearMobility final : MobilityModel {
    double lambda_w(double s) const override { return std::clamp(s, 0.0, 1.0); }
    double lambda_o(double s) const override { return 1.0 - std::clamp(s, 0.0, 1.0); }
    double s_min() const override { return 0.0; }
    double s_max() const override { return 1.0; }
};

} // namespace nlmc
