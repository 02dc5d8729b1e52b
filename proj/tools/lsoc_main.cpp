#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsoc/cli.hpp"
#include "lsoc/scenarios.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Distributed linearly-solvable optimal control for networked multi-agent systems"};
    app.require_subcommand(1);

    lsoc::cli::RunManifest manifest;
    manifest.out_dir = lsoc::cli::default_out_dir();
    std::string algo = "lsmdp";
    bool serial = false;

    CLI::App* run = app.add_subcommand("run", "Run a scenario and write trajectory/summary files");
    run->add_option("--scenario", manifest.scenario, "Builtin scenario name or config file path");
    run->add_option("--algo", algo,
                    "lsmdp | lsmdp-consensus | pathintegral | reps | compose | complexity")
        ->required();
    run->add_option("--seed", manifest.seed, "Base seed recorded in every output header");
    run->add_option("--trials", manifest.trials, "Number of independently seeded trials");
    run->add_option("--out", manifest.out_dir, "Output directory (default $LSOC_OUT_DIR or .)");
    run->add_option("--override", manifest.overrides,
                    "Config override path.to.field=value (repeatable)");
    run->add_option("--component", manifest.component_files, "Component file(s) for compose");
    run->add_option("--weight", manifest.component_weights, "Component weight(s) for compose");
    run->add_option("--agent", manifest.compose_agent, "Subsystem (0-based center agent) for compose");
    run->add_option("--topology", manifest.topology, "line | ring | tree | full (complexity)");
    run->add_option("--max-agents", manifest.max_agents, "Largest team size (complexity)");
    run->add_option("--states", manifest.states_per_agent, "Per-agent state count (complexity)");
    run->add_flag("--serial", serial, "Disable the OpenMP kernels");

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate", "Check a scenario config file");
    validate->add_option("path", validate_path, "Scenario config file")->required();

    std::string dump_name;
    CLI::App* scenarios_cmd = app.add_subcommand("scenarios", "List or dump builtin scenarios");
    scenarios_cmd->add_option("name", dump_name, "Dump this preset as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            manifest.algorithm = lsoc::cli::parse_algorithm(algo);
            manifest.exec = serial ? lsoc::Exec::serial : lsoc::Exec::parallel;
            return lsoc::cli::run(manifest);
        }
        if (validate->parsed())
            return lsoc::cli::validate(validate_path) == 0 ? lsoc::cli::kExitOk
                                                           : lsoc::cli::kExitConfig;
        if (scenarios_cmd->parsed()) {
            if (dump_name.empty()) {
                for (const std::string& name : lsoc::scenarios::list_builtin_scenarios())
                    std::cout << name << "\n";
            } else {
                std::cout << lsoc::scenarios::builtin_scenario(dump_name).data.dump(2) << "\n";
            }
            return lsoc::cli::kExitOk;
        }
    } catch (const lsoc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case lsoc::Error::Kind::config: return lsoc::cli::kExitConfig;
        case lsoc::Error::Kind::numeric: return lsoc::cli::kExitNumeric;
        case lsoc::Error::Kind::convergence: return lsoc::cli::kExitNonConvergence;
        }
    }
    return lsoc::cli::kExitOk;
}
