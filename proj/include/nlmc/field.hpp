#pragma once

#include <cmath>
#include <vector>

#include "nlmc/grid.hpp"

namespace nlmc {

/// Cell-centered scalar data (permeability, saturation, pressure, sources).
struct ScalarField {
    int nx = 0;
    int ny = 0;
    std::vector<double> v;

    ScalarField() = default;
    ScalarField(const FineGrid& fg, double fill = 0.0)
        : nx(fg.nx), ny(fg.ny), v(static_cast<size_t>(fg.cell_count()), fill) {}

    double& operator[](int c) { return v[c]; }
    double operator[](int c) const { return v[c]; }
    int size() const { return static_cast<int>(v.size()); }
};

/// Face-centered signed normal fluxes. The stored value is the volumetric
/// rate through the whole face (u.n integrated over the face), positive in
/// the +x / +y direction.
struct FluxField {
    int nx = 0;
    int ny = 0;
    std::vector<double> f;

    FluxField() = default;
    explicit FluxField(const FineGrid& fg)
        : nx(fg.nx), ny(fg.ny), f(static_cast<size_t>(fg.face_count()), 0.0) {}

    double& operator[](int face) { return f[face]; }
    double operator[](int face) const { return f[face]; }

    double max_abs() const {
        double m = 0.0;
        for (double x : f) m = std::max(m, std::abs(x));
        return m;
    }
};

namespace detail {

/// Harmonic mean, the two-point transmissibility of adjacent conductivities.
inline double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

} // namespace detail

/// Net outflow of a flux field from one cell (discrete divergence times h^2).
inline double cell_outflux(const FineGrid& fg, const FluxField& u, int c) {
    double s = 0.0;
    for (int f : fg.cell_faces(c)) s += fg.outflow_sign(c, f) * u[f];
    return s;
}

/// Sum of |outgoing flux| over the faces of a cell; the quantity the
/// transport CFL condition is built from.
inline double cell_abs_outflux(const FineGrid& fg, const FluxField& u, int c) {
    double s = 0.0;
    for (int f : fg.cell_faces(c)) {
        double out = fg.outflow_sign(c, f) * u[f];
        if (out > 0.0) s += out;
    }
    return s;
}

} // namespace nlmc
