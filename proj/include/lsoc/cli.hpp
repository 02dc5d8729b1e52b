#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsoc/parallel.hpp"

namespace lsoc::cli {

enum class Algorithm { lsmdp, lsmdp_consensus, pathintegral, reps, compose, complexity };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm algo);

/// Everything needed to reproduce a run; the seed is echoed into every output
/// file header.
struct RunManifest {
    std::string scenario;   // builtin name or config path (empty for complexity)
    Algorithm algorithm = Algorithm::lsmdp;
    std::uint64_t seed = 0;
    int trials = 1;
    std::string out_dir = ".";
    std::vector<std::string> overrides;   // dotted-path key=value

    // compose
    std::vector<std::string> component_files;
    std::vector<double> component_weights;
    int compose_agent = 0;

    // complexity
    std::string topology = "line";
    int max_agents = 8;
    int states_per_agent = 25;

    Exec exec = Exec::parallel;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitNonConvergence = 4;

/// Executes the manifest, writing CSV/JSON artifacts under out_dir. Returns a
/// process exit code; errors are reported on stderr with their category.
int run(const RunManifest& manifest);

/// Prints diagnostics (one per line) for a scenario config file; returns the
/// number of diagnostics.
int validate(const std::string& config_path, std::vector<std::string>* out = nullptr);

/// Default output directory: $LSOC_OUT_DIR or ".".
std::string default_out_dir();

} // namespace lsoc::cli
