#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nlmc/errors.hpp"
#include "nlmc/field.hpp"
#include "nlmc/grid.hpp"

namespace nlmc {

/// Labels fine cells as continuum 0 (high conductivity) when the predicate
/// fires, continuum 1 otherwise.
struct ThresholdRule {
    double threshold = 0.0;
    bool log10_scale = false;

    bool high(double kappa) const {
        double x = log10_scale ? std::log10(kappa) : kappa;
        return x > threshold;
    }
};

/// Decomposition of every coarse cell into continuum subregions.
///
/// Each nonempty subregion carries exactly one coarse unknown; empty
/// subregions are dropped so upscaled systems stay nonsingular. Region
/// ordering is coarse-major, continuum-minor, which fixes the unknown
/// numbering everywhere downstream.
struct ContinuumPartition {
    int num_continua = 1;
    std::vector<int> label; ///< per fine cell, 0-based continuum

    struct Region {
        int coarse = -1;
        int continuum = 0;
        std::vector<int> cells; ///< ascending global fine indices
        double volume = 0.0;
    };
    std::vector<Region> regions;                  ///< active regions only
    std::vector<int> region_of_cell;              ///< fine cell -> region index
    std::vector<std::vector<int>> regions_of_coarse;

    int count() const { return static_cast<int>(regions.size()); }

    /// Region index of (coarse cell, continuum), -1 if that continuum is
    /// empty there.
    int index_of(int coarse, int continuum) const {
        for (int r : regions_of_coarse[coarse])
            if (regions[r].continuum == continuum) return r;
        return -1;
    }

    std::vector<double> volumes() const {
        std::vector<double> out(regions.size());
        for (size_t r = 0; r < regions.size(); ++r) out[r] = regions[r].volume;
        return out;
    }
};

namespace detail {

inline ContinuumPartition build_partition(const FineGrid& fg, const CoarseGrid& cg,
                                          int num_continua,
                                          const std::vector<int>& label) {
    ContinuumPartition p;
    p.num_continua = num_continua;
    p.label = label;
    p.region_of_cell.assign(fg.cell_count(), -1);
    p.regions_of_coarse.assign(cg.cell_count(), {});
    double cell_area = fg.h * fg.h;
    for (int C = 0; C < cg.cell_count(); ++C) {
        auto members = cg.fine_cells(C);
        for (int j = 0; j < num_continua; ++j) {
            ContinuumPartition::Region reg;
            reg.coarse = C;
            reg.continuum = j;
            for (int c : members)
                if (label[c] == j) reg.cells.push_back(c);
            if (reg.cells.empty()) continue;
            reg.volume = cell_area * static_cast<double>(reg.cells.size());
            int idx = static_cast<int>(p.regions.size());
            for (int c : reg.cells) p.region_of_cell[c] = idx;
            p.regions_of_coarse[C].push_back(idx);
            p.regions.push_back(std::move(reg));
        }
    }
    return p;
}

} // namespace detail

/// One continuum per coarse cell: the plain single-continuum model.
inline ContinuumPartition single_continuum(const FineGrid& fg, const CoarseGrid& cg) {
    return detail::build_partition(fg, cg, 1,
                                   std::vector<int>(fg.cell_count(), 0));
}

/// Dual-continuum split of each coarse cell by a conductivity threshold.
inline ContinuumPartition identify_continua(const ScalarField& kappa,
                                            const FineGrid& fg, const CoarseGrid& cg,
                                            const ThresholdRule& rule) {
    if (kappa.size() != fg.cell_count())
        throw ConfigError("identify_continua: field size does not match grid");
    std::vector<int> label(fg.cell_count());
    for (int c = 0; c < fg.cell_count(); ++c)
        label[c] = rule.high(kappa[c]) ? 0 : 1;
    return detail::build_partition(fg, cg, 2, label);
}

/// Per-region averages of a fine field, ordered like partition.regions.
inline std::vector<double> average_per_region(const ScalarField& s,
                                              const ContinuumPartition& p) {
    std::vector<double> out(p.regions.size(), 0.0);
    for (size_t r = 0; r < p.regions.size(); ++r) {
        double sum = 0.0;
        for (int c : p.regions[r].cells) sum += s[c];
        out[r] = sum / static_cast<double>(p.regions[r].cells.size());
    }
    return out;
}

/// Faces joining two different regions (or a region and the exterior).
/// Used by coarse finite-volume schemes; faces interior to one region are
/// omitted since their contributions cancel.
struct InterfaceList {
    struct Entry {
        int face = -1;
        int region_minus = -1; ///< region on the negative side, -1 exterior
        int region_plus = -1;  ///< region on the positive side, -1 exterior
    };
    std::vector<Entry> entries;
};

inline InterfaceList region_interfaces(const FineGrid& fg,
                                       const ContinuumPartition& p) {
    InterfaceList list;
    for (int f = 0; f < fg.face_count(); ++f) {
        auto [cm, cp] = fg.face_cells(f);
        int rm = (cm >= 0) ? p.region_of_cell[cm] : -1;
        int rp = (cp >= 0) ? p.region_of_cell[cp] : -1;
        if (rm == rp) continue;
        list.entries.push_back({f, rm, rp});
    }
    return list;
}

} // namespace nlmc
