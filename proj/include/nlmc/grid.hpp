#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nlmc/errors.hpp"

namespace nlmc {

/// Sentinel for an oversampled region that covers the whole domain.
inline constexpr int layers_infinity = std::numeric_limits<int>::max();

/// Uniform cell-centered grid on [0,1]^2.
///
/// Cells are indexed row-major, y-outer x-inner: cell(i,j) = j*nx + i.
/// Faces carry a fixed orientation: a positive face value means flow in the
/// +x direction (x-faces) or +y direction (y-faces). x-faces come first in
/// the global face numbering, y-faces after them.
struct FineGrid {
    int nx = 0;
    int ny = 0;
    double h = 0.0; ///< cell width, 1/nx

    int cell_count() const { return nx * ny; }
    int cell(int i, int j) const { return j * nx + i; }
    int cell_i(int c) const { return c % nx; }
    int cell_j(int c) const { return c / nx; }

    /// Cell-center coordinates.
    double xc(int c) const { return (cell_i(c) + 0.5) * h; }
    double yc(int c) const { return (cell_j(c) + 0.5) * h; }

    int x_face_count() const { return (nx + 1) * ny; }
    int y_face_count() const { return nx * (ny + 1); }
    int face_count() const { return x_face_count() + y_face_count(); }

    /// x-face i in [0,nx], between cells (i-1,j) and (i,j).
    int x_face(int i, int j) const { return j * (nx + 1) + i; }
    /// y-face j in [0,ny], between cells (i,j-1) and (i,j).
    int y_face(int i, int j) const { return x_face_count() + j * nx + i; }

    bool is_x_face(int f) const { return f < x_face_count(); }

    /// Cells on the negative/positive side of a face; -1 outside the domain.
    std::pair<int, int> face_cells(int f) const {
        if (is_x_face(f)) {
            int i = f % (nx + 1), j = f / (nx + 1);
            int cm = (i > 0) ? cell(i - 1, j) : -1;
            int cp = (i < nx) ? cell(i, j) : -1;
            return {cm, cp};
        }
        int g = f - x_face_count();
        int i = g % nx, j = g / nx;
        int cm = (j > 0) ? cell(i, j - 1) : -1;
        int cp = (j < ny) ? cell(i, j) : -1;
        return {cm, cp};
    }

    bool is_boundary_face(int f) const {
        auto [cm, cp] = face_cells(f);
        return cm < 0 || cp < 0;
    }

    /// The four faces of a cell: left, right, bottom, top.
    std::array<int, 4> cell_faces(int c) const {
        int i = cell_i(c), j = cell_j(c);
        return {x_face(i, j), x_face(i + 1, j), y_face(i, j), y_face(i, j + 1)};
    }

    /// +1 if the cell sits on the negative side of the face (a positive face
    /// value is outflow), -1 on the positive side.
    int outflow_sign(int c, int f) const {
        auto [cm, cp] = face_cells(f);
        return (c == cm) ? +1 : -1;
    }

    std::vector<int> interior_faces() const {
        std::vector<int> out;
        out.reserve(face_count());
        for (int f = 0; f < face_count(); ++f)
            if (!is_boundary_face(f)) out.push_back(f);
        return out;
    }

    std::vector<int> boundary_faces() const {
        std::vector<int> out;
        for (int f = 0; f < face_count(); ++f)
            if (is_boundary_face(f)) out.push_back(f);
        return out;
    }
};

/// Coarse partition of the fine grid into N1 x N1 square blocks.
struct CoarseGrid {
    int N1 = 0;     ///< coarse cells per axis
    int ratio = 0;  ///< fine cells per coarse cell per axis, H/h
    double H = 0.0; ///< coarse cell width, 1/N1
    int fine_nx = 0;

    int cell_count() const { return N1 * N1; }
    int cell(int I, int J) const { return J * N1 + I; }
    int cell_i(int C) const { return C % N1; }
    int cell_j(int C) const { return C / N1; }

    int coarse_of_fine(int fine_cell) const {
        int i = fine_cell % fine_nx, j = fine_cell / fine_nx;
        return cell(i / ratio, j / ratio);
    }

    /// Fine cells contained in coarse cell C, in ascending global order.
    std::vector<int> fine_cells(int C) const {
        std::vector<int> out;
        out.reserve(ratio * ratio);
        int i0 = cell_i(C) * ratio, j0 = cell_j(C) * ratio;
        for (int j = j0; j < j0 + ratio; ++j)
            for (int i = i0; i < i0 + ratio; ++i)
                out.push_back(j * fine_nx + i);
        return out;
    }

    /// Chebyshev distance between two coarse cells.
    int distance(int A, int B) const {
        return std::max(std::abs(cell_i(A) - cell_i(B)),
                        std::abs(cell_j(A) - cell_j(B)));
    }
};

/// A coarse block enlarged by a number of coarse layers (Chebyshev box
/// neighborhoods), clipped at the domain boundary. layers_infinity selects
/// the whole domain.
struct OversampleRegion {
    int center = -1; ///< coarse index of the seed block
    int layers = 0;
    std::vector<int> coarse_cells;
    std::vector<int> fine_cells;     ///< ascending global order
    std::vector<int> boundary_faces; ///< faces with exactly one side inside
    std::vector<int> local_of_fine;  ///< global fine cell -> local index, -1 outside

    int size() const { return static_cast<int>(fine_cells.size()); }
    bool contains_fine(int c) const { return local_of_fine[c] >= 0; }
    bool covers_domain(int n_coarse) const {
        return static_cast<int>(coarse_cells.size()) == n_coarse;
    }
};

inline std::pair<FineGrid, CoarseGrid> build_grids(int nx, int N1) {
    if (nx <= 0 || N1 <= 0)
        throw ConfigError("build_grids: cell counts must be positive");
    if (nx % N1 != 0)
        throw ConfigError("build_grids: fine count " + std::to_string(nx) +
                          " not divisible by coarse count " + std::to_string(N1));
    if (nx < 2 * N1)
        throw ConfigError("build_grids: need at least 2 fine cells per coarse cell");
    FineGrid fg;
    fg.nx = fg.ny = nx;
    fg.h = 1.0 / nx;
    CoarseGrid cg;
    cg.N1 = N1;
    cg.ratio = nx / N1;
    cg.H = 1.0 / N1;
    cg.fine_nx = nx;
    return {fg, cg};
}

inline OversampleRegion oversample(const FineGrid& fg, const CoarseGrid& cg,
                                   int center, int layers) {
    if (center < 0 || center >= cg.cell_count())
        throw ConfigError("oversample: coarse index out of range");
    if (layers < 0)
        throw ConfigError("oversample: negative layer count");

    OversampleRegion r;
    r.center = center;
    r.layers = layers;

    int ci = cg.cell_i(center), cj = cg.cell_j(center);
    int k = (layers == layers_infinity) ? cg.N1 : layers;
    int i0 = std::max(0, ci - k), i1 = std::min(cg.N1 - 1, ci + k);
    int j0 = std::max(0, cj - k), j1 = std::min(cg.N1 - 1, cj + k);
    for (int J = j0; J <= j1; ++J)
        for (int I = i0; I <= i1; ++I)
            r.coarse_cells.push_back(cg.cell(I, J));

    r.local_of_fine.assign(fg.cell_count(), -1);
    for (int C : r.coarse_cells)
        for (int c : cg.fine_cells(C))
            r.local_of_fine[c] = -2; // membership mark, renumbered below
    for (int c = 0; c < fg.cell_count(); ++c)
        if (r.local_of_fine[c] == -2) {
            r.local_of_fine[c] = static_cast<int>(r.fine_cells.size());
            r.fine_cells.push_back(c);
        }

    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        bool in_m = cm >= 0 && r.contains_fine(cm);
        bool in_p = cp >= 0 && r.contains_fine(cp);
        if (in_m != in_p) r.boundary_faces.push_back(f);
    }
    return r;
}

} // namespace nlmc
