#pragma once

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "nlmc/errors.hpp"
#include "nlmc/field.hpp"

namespace nlmc {

// Field files are plain text: a "nx ny" header line followed by nx*ny
// whitespace-separated values in row-major order, y-outer x-inner. Values
// are written with 17 significant digits so a write/read cycle is lossless.

inline void write_snapshot(const ScalarField& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << s.nx << " " << s.ny << "\n";
    char buf[40];
    for (int j = 0; j < s.ny; ++j) {
        for (int i = 0; i < s.nx; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", s.v[j * s.nx + i]);
            out << buf << (i + 1 == s.nx ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw ConfigError("write failed: " + path);
}

inline ScalarField read_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    ScalarField s;
    if (!(in >> s.nx >> s.ny) || s.nx <= 0 || s.ny <= 0)
        throw ConfigError("malformed header in " + path);
    s.v.resize(static_cast<size_t>(s.nx) * s.ny);
    for (size_t k = 0; k < s.v.size(); ++k)
        if (!(in >> s.v[k]))
            throw ConfigError("truncated field file: " + path + " (value " +
                              std::to_string(k) + " of " + std::to_string(s.v.size()) + ")");
    return s;
}

/// Reads a permeability field and validates it against the grid: dimensions
/// must match and every value must be strictly positive.
inline ScalarField load_permeability(const std::string& path, const FineGrid& fg) {
    ScalarField s = read_snapshot(path);
    if (s.nx != fg.nx || s.ny != fg.ny) {
        std::ostringstream msg;
        msg << "permeability file " << path << " is " << s.nx << "x" << s.ny
            << ", grid is " << fg.nx << "x" << fg.ny;
        throw ConfigError(msg.str());
    }
    for (int c = 0; c < s.size(); ++c)
        if (!(s.v[c] > 0.0)) {
            std::ostringstream msg;
            msg << "non-positive permeability " << s.v[c] << " at cell ("
                << c % s.nx << "," << c / s.nx << ") in " << path;
            throw ConfigError(msg.str());
        }
    return s;
}

/// Synthetic high-contrast medium: meandering channels of `channel` value
/// on a `background` matrix. Each channel is a 4-connected path spanning
/// the domain left to right. Deterministic for a fixed seed.
inline ScalarField generate_channelized(const FineGrid& fg, unsigned long seed,
                                        int n_channels, double background,
                                        double channel, int thickness = 1) {
    if (!(background > 0.0) || !(channel > background))
        throw ConfigError("generate_channelized: need channel > background > 0");
    ScalarField s(fg, background);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> row_pick(1, fg.ny - 2);
    std::uniform_real_distribution<double> real(0.0, 1.0);
    std::uniform_int_distribution<int> updown(0, 1);

    auto paint = [&](int i, int j) {
        for (int t = 0; t < thickness; ++t) {
            int jj = std::min(fg.ny - 1, std::max(0, j + t));
            s.v[fg.cell(i, jj)] = channel;
        }
    };

    for (int k = 0; k < n_channels; ++k) {
        int j = row_pick(rng);
        int drift = updown(rng) ? 1 : -1;
        paint(0, j);
        for (int i = 1; i < fg.nx; ++i) {
            // Meander: occasionally take a vertical jog before moving on.
            if (real(rng) < 0.35) {
                if (real(rng) < 0.25) drift = -drift;
                int steps = 1 + (real(rng) < 0.3 ? 1 : 0);
                for (int t = 0; t < steps; ++t) {
                    int jn = j + drift;
                    if (jn < 1 || jn > fg.ny - 2) {
                        drift = -drift;
                        jn = j + drift;
                    }
                    j = jn;
                    paint(i - 1, j); // keep the path 4-connected
                }
            }
            paint(i, j);
        }
    }
    return s;
}

} // namespace nlmc
