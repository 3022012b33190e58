#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nlmc/config.hpp"
#include "nlmc/errors.hpp"

namespace nlmc {

/// Volume-weighted relative L2 distance between coarse vectors:
/// sqrt(sum vol (U - Uref)^2) / sqrt(sum vol Uref^2).
inline double relative_l2_error(const Eigen::VectorXd& U, const Eigen::VectorXd& Uref,
                                const std::vector<double>& volumes) {
    double num = 0.0, den = 0.0;
    for (int r = 0; r < U.size(); ++r) {
        double d = U[r] - Uref[r];
        num += volumes[r] * d * d;
        den += volumes[r] * Uref[r] * Uref[r];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

struct ErrorRow {
    std::string scheme;
    int layers = 0;
    double beta = 1.0;
    double time = 0.0;
    double error = 0.0;
    double runtime_s = 0.0;
};

struct ErrorReport {
    std::vector<ErrorRow> rows;
};

inline void write_errors_csv(const ErrorReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "scheme,layers,beta,time,error,runtime_s\n";
    char buf[160];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, ",%s,%.12g,%.12g,%.12g,%.3f\n",
                      layers_to_string(r.layers).c_str(), r.beta, r.time, r.error, r.runtime_s);
        out << r.scheme << buf;
    }
}

inline ErrorReport read_errors_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("scheme,layers,beta,time,error", 0) != 0)
        throw ConfigError("not an error-report csv: " + path);
    ErrorReport report;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::stringstream ss(line);
        std::string item;
        std::vector<std::string> fields;
        while (std::getline(ss, item, ',')) fields.push_back(detail::trim(item));
        if (fields.size() != 6) throw ConfigError(path + ": malformed row: " + line);
        ErrorRow r;
        r.scheme = fields[0];
        r.layers = detail::parse_layers_token(fields[1]);
        r.beta = std::stod(fields[2]);
        r.time = std::stod(fields[3]);
        r.error = std::stod(fields[4]);
        r.runtime_s = std::stod(fields[5]);
        report.rows.push_back(r);
    }
    return report;
}

/// Per-time ratio of two reports (err_a / err_b) with a pass verdict against
/// a minimum-ratio threshold. Observation times must match one-to-one.
struct CompareSummary {
    struct Row {
        double time;
        double error_a;
        double error_b;
        double ratio;
        bool pass;
    };
    std::vector<Row> rows;
    bool all_pass = true;
};

inline CompareSummary compare_reports(const ErrorReport& a, const ErrorReport& b,
                                      double min_ratio = 1.0) {
    CompareSummary out;
    for (const auto& ra : a.rows) {
        const ErrorRow* match = nullptr;
        for (const auto& rb : b.rows)
            if (std::abs(rb.time - ra.time) <= 1e-9 * std::max(1.0, std::abs(ra.time))) {
                if (match) throw ConfigError("compare: duplicate observation time in second report");
                match = &rb;
            }
        if (!match)
            throw ConfigError("compare: no matching observation time " + std::to_string(ra.time));
        CompareSummary::Row row;
        row.time = ra.time;
        row.error_a = ra.error;
        row.error_b = match->error;
        row.ratio = (match->error == 0.0)
                        ? (ra.error == 0.0 ? 1.0 : std::numeric_limits<double>::infinity())
                        : ra.error / match->error;
        row.pass = row.ratio >= min_ratio;
        out.all_pass = out.all_pass && row.pass;
        out.rows.push_back(row);
    }
    return out;
}

} // namespace nlmc
