#include "barrier_lab/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace bl = barrier_lab;

namespace {

int report_config_error(const bl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
}

int run_config(const bl::ScenarioConfig& config, const std::string& out) {
    const std::filesystem::path dir = out.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(out);
    const bl::RunResult result = bl::run_scenario(config, dir);
    std::cout << result.summary;
    for (const std::string& e : result.errors) {
        std::cerr << "error: " << e << "\n";
    }
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"barrier-lab: analysis of CBF safety filters and CLF-CBF QPs"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run the tasks of a scenario config");
    run->add_option("--config", config_path, "Scenario config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    std::string scenario_name;
    bool emit_config = false;
    auto* scenario = app.add_subcommand("scenario", "Built-in scenarios");
    scenario->add_option("name", scenario_name, "Scenario name")->required();
    scenario->add_flag("--emit-config", emit_config, "Print the config instead of running it");
    scenario->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    auto* compare = app.add_subcommand("compare", "Cross-pair invariance report over the CBFs of a config");
    compare->add_option("--config", config_path, "Scenario config (JSON)")->required();
    compare->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            bl::ScenarioConfig config;
            try {
                config = bl::load_config(config_path);
            } catch (const bl::ConfigError& e) {
                return report_config_error(e);
            }
            return run_config(config, out_dir);
        }
        if (*scenario) {
            bl::ScenarioConfig config;
            try {
                config = bl::builtin_scenario(scenario_name);
            } catch (const bl::InvalidParameter& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
            if (emit_config) {
                std::cout << bl::dump_config(config);
                return 0;
            }
            return run_config(config, out_dir);
        }
        if (*compare) {
            bl::ScenarioConfig config;
            try {
                config = bl::load_config(config_path);
            } catch (const bl::ConfigError& e) {
                return report_config_error(e);
            }
            const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(out_dir);
            const bl::CompareResult result = bl::compare_pairs(config, dir);
            for (const auto& c : result.report.at("comparisons")) {
                std::cout << c.at("pair")[0].get<std::string>() << " vs " << c.at("pair")[1].get<std::string>()
                          << ": equilibria " << (c.at("undesirable_hausdorff_pass").get<bool>() ? "pass" : "FAIL")
                          << ", reduced spectra " << (c.at("reduced_poly_pass").get<bool>() ? "pass" : "FAIL")
                          << ", boundary field " << (c.at("boundary_field_pass").get<bool>() ? "pass" : "FAIL")
                          << "\n";
            }
            std::cout << "invariance: " << (result.passed ? "pass" : "FAIL") << " -> "
                      << (dir / "invariance_report.json").string() << "\n";
            return result.passed ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
