// Command-line driver: runs fine references, coarse baselines and the
// multiscale schemes from a key=value config, writing errors.csv, a run
// manifest and optional field snapshots.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "nlmc/config.hpp"
#include "nlmc/error_report.hpp"
#include "nlmc/errors.hpp"
#include "nlmc/experiments.hpp"
#include "nlmc/field_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::vector<std::string> layers;
    std::vector<double> beta;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config_path, "experiment config file")->required();
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--seed", opt.seed, "override kappa.seed");
    cmd->add_option("--layers", opt.layers,
                    "override oversampling layers (single value, or list for sweep)")
        ->delimiter(',');
    cmd->add_option("--beta", opt.beta, "override flux exponent (list for sweep)")->delimiter(',');
}

nlmc::ExperimentConfig resolve_config(const CommonOptions& opt, bool sweep) {
    nlmc::ExperimentConfig cfg = nlmc::load_config(opt.config_path);
    if (opt.seed >= 0) cfg.seed = static_cast<unsigned long>(opt.seed);
    if (!opt.layers.empty()) {
        std::vector<int> parsed;
        for (const auto& tok : opt.layers) parsed.push_back(nlmc::detail::parse_layers_token(tok));
        if (sweep) {
            cfg.sweep_layers = parsed;
        } else if (parsed.size() == 1) {
            cfg.layers = parsed[0];
        } else {
            throw nlmc::ConfigError("--layers takes a single value outside of sweep");
        }
    }
    if (!opt.beta.empty()) {
        if (sweep) {
            cfg.sweep_beta = opt.beta;
        } else if (opt.beta.size() == 1) {
            cfg.beta = opt.beta[0];
        } else {
            throw nlmc::ConfigError("--beta takes a single value outside of sweep");
        }
    }
    return cfg;
}

int run_subcommand(const CommonOptions& opt, const std::string& scheme, bool sweep) {
    nlmc::ExperimentConfig cfg = resolve_config(opt, sweep);
    if (scheme == "two-phase") cfg.scheme = "two-phase";
    fs::create_directories(opt.out_dir);

    nlmc::ExperimentSetup setup = nlmc::build_setup(cfg);
    nlmc::RunResult result = sweep ? nlmc::run_sweep(setup)
                                   : nlmc::run_scheme(setup, scheme, cfg.layers, cfg.beta);

    fs::path out(opt.out_dir);
    nlmc::write_errors_csv(result.report, (out / "errors.csv").string());
    {
        std::ofstream manifest(out / "manifest.txt");
        manifest << nlmc::manifest_text(cfg);
    }
    for (const auto& [name, field] : result.snapshots)
        nlmc::write_snapshot(field, (out / name).string());

    for (const auto& row : result.report.rows)
        std::cout << row.scheme << " layers=" << nlmc::layers_to_string(row.layers)
                  << " beta=" << row.beta << " t=" << row.time << " error=" << row.error * 100.0
                  << "%\n";
    std::cout << "wrote " << (out / "errors.csv").string() << "\n";
    return 0;
}

int run_compare(const std::string& path_a, const std::string& path_b, double min_ratio) {
    nlmc::ErrorReport a = nlmc::read_errors_csv(path_a);
    nlmc::ErrorReport b = nlmc::read_errors_csv(path_b);
    nlmc::CompareSummary summary = nlmc::compare_reports(a, b, min_ratio);
    for (const auto& row : summary.rows)
        std::cout << "t=" << row.time << " a=" << row.error_a * 100.0
                  << "% b=" << row.error_b * 100.0 << "% ratio=" << row.ratio << " "
                  << (row.pass ? "pass" : "FAIL") << "\n";
    std::cout << (summary.all_pass ? "all pass" : "threshold not met") << "\n";
    return summary.all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiscale upscaling experiments for heterogeneous porous media"};
    app.require_subcommand(1);

    CommonOptions opt;
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"fine", "fine-grid reference (errors are the self-comparison, zero)"},
        {"baseline", "coarse upwind finite-volume baseline"},
        {"nlmc", "linear multiscale scheme"},
        {"nlmc-nonlinear", "nonlinear multiscale scheme"},
        {"two-phase", "coarse two-phase scheme"},
        {"sweep", "layer/beta sweep of the config's scheme"},
    };
    for (const auto& sub : subs) add_common(app.add_subcommand(sub.name, sub.help), opt);

    std::string cmp_a, cmp_b;
    double min_ratio = 1.0;
    CLI::App* cmp = app.add_subcommand("compare", "ratio of two error reports (a / b) per time");
    cmp->add_option("a", cmp_a, "first errors.csv (numerator)")->required();
    cmp->add_option("b", cmp_b, "second errors.csv (denominator)")->required();
    cmp->add_option("--min-ratio", min_ratio, "pass threshold for each ratio");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmp->parsed()) return run_compare(cmp_a, cmp_b, min_ratio);
        for (const auto& sub : subs)
            if (app.get_subcommand(sub.name)->parsed())
                return run_subcommand(opt, sub.name, std::string(sub.name) == "sweep");
        std::cerr << "no subcommand selected\n";
        return 2;
    } catch (const nlmc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlmc::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
