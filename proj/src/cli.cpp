#include "lsoc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lsoc/composition.hpp"
#include "lsoc/consensus.hpp"
#include "lsoc/io.hpp"
#include "lsoc/lsmdp.hpp"
#include "lsoc/pathintegral.hpp"
#include "lsoc/reps.hpp"
#include "lsoc/scenarios.hpp"

namespace lsoc::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using io::fmt;

Algorithm parse_algorithm(const std::string& name) {
    if (name == "lsmdp") return Algorithm::lsmdp;
    if (name == "lsmdp-consensus") return Algorithm::lsmdp_consensus;
    if (name == "pathintegral") return Algorithm::pathintegral;
    if (name == "reps") return Algorithm::reps;
    if (name == "compose") return Algorithm::compose;
    if (name == "complexity") return Algorithm::complexity;
    throw ConfigError("unknown algorithm '" + name +
                      "'; expected lsmdp, lsmdp-consensus, pathintegral, reps, compose or complexity");
}

std::string algorithm_name(Algorithm algo) {
    switch (algo) {
    case Algorithm::lsmdp: return "lsmdp";
    case Algorithm::lsmdp_consensus: return "lsmdp-consensus";
    case Algorithm::pathintegral: return "pathintegral";
    case Algorithm::reps: return "reps";
    case Algorithm::compose: return "compose";
    case Algorithm::complexity: return "complexity";
    }
    return "?";
}

std::string default_out_dir() {
    const char* env = std::getenv("LSOC_OUT_DIR");
    return env && *env ? env : ".";
}

namespace {

std::string manifest_header(const RunManifest& m, int trial = -1) {
    std::string line = "# scenario=" + (m.scenario.empty() ? "-" : m.scenario) +
                       " algo=" + algorithm_name(m.algorithm) + " seed=" + std::to_string(m.seed);
    if (trial >= 0) line += " trial=" + std::to_string(trial);
    return line + "\n";
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << content;
}

json manifest_json(const RunManifest& m) {
    return json{{"scenario", m.scenario},
                {"algo", algorithm_name(m.algorithm)},
                {"seed", m.seed},
                {"trials", m.trials}};
}

scenarios::ScenarioConfig resolve_scenario(const RunManifest& manifest) {
    scenarios::ScenarioConfig config;
    if (fs::exists(manifest.scenario))
        config = scenarios::load_scenario_file(manifest.scenario);
    else
        config = scenarios::builtin_scenario(manifest.scenario);
    for (const std::string& entry : manifest.overrides) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + entry + "' must look like path.to.field=value");
        scenarios::apply_override(config.data, entry.substr(0, eq), entry.substr(eq + 1));
    }
    return scenarios::parse_scenario(config.data);
}

// ----- grid runs ------------------------------------------------------------

/// Desirability table written per agent; doubles as a composition component file.
void write_component_file(const fs::path& path, const RunManifest& manifest, int agent,
                          const lsmdp::JointModel& model, const lsmdp::Desirability& z) {
    json j;
    j["manifest"] = manifest_json(manifest);
    j["agent"] = agent + 1;
    j["scenario"] = manifest.scenario;
    std::vector<int> members;
    for (int m : model.subsystem().members) members.push_back(m + 1);
    j["members"] = members;
    j["z_interior"] = std::vector<double>(z.interior.data(), z.interior.data() + z.interior.size());
    j["z_boundary"] = std::vector<double>(z.boundary.data(), z.boundary.data() + z.boundary.size());
    Eigen::VectorXd phi(model.n_boundary());
    for (std::int64_t b = 0; b < model.n_boundary(); ++b)
        phi(b) = model.exit_cost(model.boundary_state(b));
    j["phi_boundary"] = std::vector<double>(phi.data(), phi.data() + phi.size());
    write_text(path, j.dump(2) + "\n");
}

int run_grid(const RunManifest& manifest, const scenarios::ScenarioConfig& config) {
    const scenarios::GridScenario scenario = scenarios::make_grid_scenario(config);
    const scenarios::GridBuild build = scenarios::build_grid_scenario(scenario);
    const int n = scenario.graph.n_agents();
    const fs::path out(manifest.out_dir);
    fs::create_directories(out);

    std::vector<lsmdp::Desirability> desirabilities(static_cast<std::size_t>(n));
    std::vector<std::string> consensus_logs(static_cast<std::size_t>(n));
    // subsystem solves are independent; one task per agent
    parallel_for(manifest.exec, n, [&](std::int64_t i) {
        const lsmdp::DesirabilitySystem sys =
            lsmdp::build_linear_system(build.joint_models[static_cast<std::size_t>(i)], Exec::serial);
        if (manifest.algorithm == Algorithm::lsmdp_consensus) {
            std::string log = manifest_header(manifest) + "iteration,disagreement,residual\n";
            desirabilities[static_cast<std::size_t>(i)] = consensus::solve_desirability_consensus(
                build.joint_models[static_cast<std::size_t>(i)], sys, 1e-9, 100000, Exec::serial,
                [&log](int iter, double dis, double res) {
                    log += std::to_string(iter) + "," + fmt(dis) + "," + fmt(res) + "\n";
                });
            consensus_logs[static_cast<std::size_t>(i)] = std::move(log);
        } else {
            desirabilities[static_cast<std::size_t>(i)] = lsmdp::solve_desirability_centralized(
                sys, scenario.tolerance, scenario.max_iterations, Exec::serial);
        }
    });

    for (int i = 0; i < n; ++i) {
        write_component_file(out / ("desirability_agent" + std::to_string(i + 1) + ".json"),
                             manifest, i, build.joint_models[static_cast<std::size_t>(i)],
                             desirabilities[static_cast<std::size_t>(i)]);
        if (manifest.algorithm == Algorithm::lsmdp_consensus)
            write_text(out / ("consensus_agent" + std::to_string(i + 1) + ".csv"),
                       consensus_logs[static_cast<std::size_t>(i)]);
    }

    std::vector<int> start(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        start[static_cast<std::size_t>(i)] =
            scenario.cell_state(scenario.agents[static_cast<std::size_t>(i)].initial);

    json summary;
    summary["manifest"] = manifest_json(manifest);
    json trials = json::array();
    for (int trial = 0; trial < manifest.trials; ++trial) {
        const lsmdp::GridRollout rollout = lsmdp::greedy_rollout(
            scenario.graph, build.joint_models, desirabilities, start, scenario.horizon,
            scenario.mode, substream({manifest.seed, static_cast<std::uint64_t>(trial)}));
        std::string csv = manifest_header(manifest, trial) + "step,agent,row,col\n";
        int obstacle_visits = 0;
        for (std::size_t t = 0; t < rollout.states.size(); ++t) {
            for (int i = 0; i < n; ++i) {
                const int s = rollout.states[t][static_cast<std::size_t>(i)];
                csv += std::to_string(t) + "," + std::to_string(i + 1) + "," +
                       std::to_string(s / scenario.cols + 1) + "," +
                       std::to_string(s % scenario.cols + 1) + "\n";
                if (scenario.is_obstacle(s)) ++obstacle_visits;
            }
        }
        char name[64];
        std::snprintf(name, sizeof(name), "trajectory_%03d.csv", trial);
        write_text(out / name, csv);
        trials.push_back(json{{"trial", trial},
                              {"steps", rollout.states.size() - 1},
                              {"all_exited", rollout.all_exited},
                              {"obstacle_visits", obstacle_visits}});
    }
    summary["trials"] = trials;
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

// ----- continuous runs -------------------------------------------------------

std::string continuous_csv(const RunManifest& manifest, int trial,
                           const pathintegral::RunLog& log) {
    std::string csv = manifest_header(manifest, trial) + "time,agent,x,y,v,phi,u_acc,u_turn,cost\n";
    for (const pathintegral::CycleRecord& r : log.records) {
        csv += fmt(r.time) + "," + std::to_string(r.agent + 1);
        for (int k = 0; k < r.state.size(); ++k) csv += "," + fmt(r.state(k));
        for (int k = 0; k < r.local_control.size(); ++k) csv += "," + fmt(r.local_control(k));
        csv += "," + fmt(r.immediate_cost) + "\n";
    }
    return csv;
}

/// Mean/std of the UAV pair distances per cycle, plus the Fig.-11-style
/// immediate-cost-vs-rollout series, aggregated over trials.
json continuous_summary(const std::vector<pathintegral::RunLog>& logs, int n_agents) {
    json summary;
    if (logs.empty()) return summary;
    const int cycles = static_cast<int>(logs[0].records.size()) / n_agents;

    json pair_distances = json::object();
    for (int a = 0; a < n_agents; ++a) {
        for (int b = a + 1; b < n_agents; ++b) {
            json times = json::array(), means = json::array(), stds = json::array();
            for (int c = 0; c < cycles; ++c) {
                double acc = 0.0, acc2 = 0.0;
                for (const auto& log : logs) {
                    const auto& ra = log.records[static_cast<std::size_t>(c * n_agents + a)];
                    const auto& rb = log.records[static_cast<std::size_t>(c * n_agents + b)];
                    const double d = (ra.state.head(2) - rb.state.head(2)).norm();
                    acc += d;
                    acc2 += d * d;
                }
                const double mean = acc / static_cast<double>(logs.size());
                const double var =
                    std::max(0.0, acc2 / static_cast<double>(logs.size()) - mean * mean);
                times.push_back(logs[0].records[static_cast<std::size_t>(c * n_agents)].time);
                means.push_back(mean);
                stds.push_back(std::sqrt(var));
            }
            pair_distances[std::to_string(a + 1) + "-" + std::to_string(b + 1)] =
                json{{"time", times}, {"mean", means}, {"std", stds}};
        }
    }
    summary["pair_distances"] = pair_distances;

    json cost_series = json::object();
    for (int a = 0; a < n_agents; ++a) {
        json rollouts = json::array(), means = json::array(), stds = json::array();
        std::int64_t cumulative = 0;
        for (int c = 0; c < cycles; ++c) {
            double acc = 0.0, acc2 = 0.0;
            for (const auto& log : logs) {
                const double v =
                    log.records[static_cast<std::size_t>(c * n_agents + a)].immediate_cost;
                acc += v;
                acc2 += v * v;
            }
            cumulative += logs[0].records[static_cast<std::size_t>(c * n_agents + a)].rollouts_used;
            const double mean = acc / static_cast<double>(logs.size());
            rollouts.push_back(cumulative);
            means.push_back(mean);
            stds.push_back(std::sqrt(
                std::max(0.0, acc2 / static_cast<double>(logs.size()) - mean * mean)));
        }
        cost_series["agent" + std::to_string(a + 1)] =
            json{{"cumulative_rollouts", rollouts}, {"mean", means}, {"std", stds}};
    }
    summary["immediate_cost"] = cost_series;

    json ess = json::object();
    for (int a = 0; a < n_agents; ++a) {
        json series = json::array();
        for (int c = 0; c < cycles; ++c) {
            double acc = 0.0;
            for (const auto& log : logs)
                acc += log.records[static_cast<std::size_t>(c * n_agents + a)].effective_samples;
            series.push_back(acc / static_cast<double>(logs.size()));
        }
        ess["agent" + std::to_string(a + 1)] = series;
    }
    summary["effective_samples"] = ess;

    json path_value = json::object();
    for (int a = 0; a < n_agents; ++a) {
        json means = json::array(), stds = json::array();
        for (int c = 0; c < cycles; ++c) {
            const auto& rec = logs[0].records[static_cast<std::size_t>(c * n_agents + a)];
            means.push_back(rec.path_value_mean);
            stds.push_back(rec.path_value_std);
        }
        path_value["agent" + std::to_string(a + 1)] = json{{"mean", means}, {"std", stds}};
    }
    summary["path_value"] = path_value;
    return summary;
}

int run_continuous(const RunManifest& manifest, const scenarios::ScenarioConfig& config) {
    const scenarios::UnicycleScenario scenario = scenarios::make_unicycle_scenario(config);
    const bool use_reps = manifest.algorithm == Algorithm::reps;
    const pathintegral::Team team = scenarios::build_unicycle_team(scenario, use_reps);
    const int n = scenario.graph.n_agents();
    const fs::path out(manifest.out_dir);
    fs::create_directories(out);

    std::vector<pathintegral::RunLog> logs(static_cast<std::size_t>(manifest.trials));
    std::vector<std::vector<reps::IterationStats>> iteration_logs(
        static_cast<std::size_t>(manifest.trials));
    // trials fan out; rollout kernels inside each trial stay serial then
    parallel_for(manifest.exec, manifest.trials, [&](std::int64_t trial) {
        const std::uint64_t trial_seed = substream({manifest.seed, static_cast<std::uint64_t>(trial)});
        if (use_reps) {
            reps::RepsRunParams params;
            params.t_final = scenario.t_final;
            params.control_cycle = scenario.control_cycle;
            params.segments = scenario.segments;
            params.eps_min = scenario.eps_min;
            params.learn = scenario.reps;
            params.execute_mean = scenario.reps_execute_mean;
            params.learn.seed = trial_seed;
            reps::RepsRunLog log = reps::reps_run(team, params, Exec::serial);
            logs[static_cast<std::size_t>(trial)] = std::move(log.log);
            iteration_logs[static_cast<std::size_t>(trial)] = std::move(log.iterations);
        } else {
            pathintegral::SamplingRunParams params;
            params.t_final = scenario.t_final;
            params.control_cycle = scenario.control_cycle;
            params.segments = scenario.segments;
            params.rollouts = scenario.rollouts;
            params.eps_min = scenario.eps_min;
            params.seed = trial_seed;
            logs[static_cast<std::size_t>(trial)] =
                pathintegral::receding_horizon_run(team, params, Exec::serial);
        }
    });

    for (int trial = 0; trial < manifest.trials; ++trial) {
        char name[64];
        std::snprintf(name, sizeof(name), "trajectory_%03d.csv", trial);
        write_text(out / name,
                   continuous_csv(manifest, trial, logs[static_cast<std::size_t>(trial)]));
    }
    json summary = continuous_summary(logs, n);
    summary["manifest"] = manifest_json(manifest);
    write_text(out / "summary.json", summary.dump(2) + "\n");

    if (use_reps) {
        json iterations = json::array();
        for (int trial = 0; trial < manifest.trials; ++trial) {
            for (const reps::IterationStats& s : iteration_logs[static_cast<std::size_t>(trial)]) {
                iterations.push_back(json{{"trial", trial},
                                          {"iteration", s.iteration},
                                          {"kappa", s.kappa},
                                          {"dual_value", s.dual_value},
                                          {"empirical_kl", s.empirical_kl},
                                          {"policy_change", s.policy_change},
                                          {"theta_norm", s.theta_norm},
                                          {"rollouts", s.rollouts},
                                          {"gain_norm", s.gain_norm},
                                          {"offset_norm", s.offset_norm},
                                          {"covariance_norm", s.covariance_norm}});
            }
        }
        json j;
        j["manifest"] = manifest_json(manifest);
        j["iterations"] = iterations;
        write_text(out / "reps_iterations.json", j.dump(2) + "\n");
    }
    return kExitOk;
}

// ----- complexity ------------------------------------------------------------

int run_complexity(const RunManifest& manifest) {
    network::Topology family;
    if (manifest.topology == "line") family = network::Topology::line;
    else if (manifest.topology == "ring") family = network::Topology::ring;
    else if (manifest.topology == "tree") family = network::Topology::binary_tree;
    else if (manifest.topology == "full") family = network::Topology::full;
    else throw ConfigError("unknown topology '" + manifest.topology + "'; expected line, ring, tree or full");

    const fs::path out(manifest.out_dir);
    fs::create_directories(out);
    std::string csv = manifest_header(manifest) +
                      "topology,n_agents,agent,m_centralized,m_parallel\n";
    for (int n = 1; n <= manifest.max_agents; ++n) {
        const auto central = consensus::complexity_report(family, n, manifest.states_per_agent,
                                                          consensus::ComplexityMode::centralized);
        const auto parallel = consensus::complexity_report(family, n, manifest.states_per_agent,
                                                           consensus::ComplexityMode::parallel);
        for (int i = 0; i < n; ++i)
            csv += manifest.topology + "," + std::to_string(n) + "," + std::to_string(i + 1) + "," +
                   std::to_string(central[static_cast<std::size_t>(i)]) + "," +
                   std::to_string(parallel[static_cast<std::size_t>(i)]) + "\n";
    }
    write_text(out / "complexity.csv", csv);
    return kExitOk;
}

// ----- compose ---------------------------------------------------------------

int run_compose(const RunManifest& manifest) {
    if (manifest.component_files.size() < 1)
        throw ConfigError("compose needs at least one --component file");
    if (manifest.component_weights.size() != manifest.component_files.size())
        throw ConfigError("compose needs one --weight per component file");

    const scenarios::ScenarioConfig config = resolve_scenario(manifest);
    const scenarios::GridScenario scenario = scenarios::make_grid_scenario(config);
    const scenarios::GridBuild build = scenarios::build_grid_scenario(scenario);
    const int agent = manifest.compose_agent;
    if (agent < 0 || agent >= scenario.graph.n_agents())
        throw ConfigError("compose agent index out of range");
    const lsmdp::JointModel& model = build.joint_models[static_cast<std::size_t>(agent)];

    composition::DiscreteComponentSet set;
    set.model = &model;
    set.weights = manifest.component_weights;
    for (const std::string& file : manifest.component_files) {
        std::ifstream in(file);
        if (!in) throw ConfigError("cannot read component file '" + file + "'");
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ParseError("component file '" + file + "': " + e.what());
        }
        if (j.value("agent", -1) != agent + 1)
            throw MisalignedStateSpaces("component file '" + file + "' belongs to another agent");
        lsmdp::Desirability z;
        const auto zi = j.at("z_interior").get<std::vector<double>>();
        const auto zb = j.at("z_boundary").get<std::vector<double>>();
        z.interior = Eigen::Map<const Eigen::VectorXd>(zi.data(), static_cast<Eigen::Index>(zi.size()));
        z.boundary = Eigen::Map<const Eigen::VectorXd>(zb.data(), static_cast<Eigen::Index>(zb.size()));
        set.desirabilities.push_back(std::move(z));
        const auto phi = j.at("phi_boundary").get<std::vector<double>>();
        set.terminal_costs.push_back(
            Eigen::Map<const Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(phi.size())));
    }
    set.validate();

    // composed controller rows along the composite max-likelihood rollout
    const fs::path out(manifest.out_dir);
    fs::create_directories(out);
    std::string csv = manifest_header(manifest) + "step,joint_state,successor,probability\n";

    std::vector<int> member_states;
    for (int member : model.subsystem().members)
        member_states.push_back(
            scenario.cell_state(scenario.agents[static_cast<std::size_t>(member)].initial));
    std::int64_t joint = model.encode(member_states);
    for (int step = 0; step < scenario.horizon; ++step) {
        if (model.boundary_ordinal(joint) >= 0) break;
        const lsmdp::SparseDistribution dist = composition::compose_discrete_controller(set, joint);
        std::int64_t best = dist.front().first;
        double best_p = -1.0;
        for (const auto& [succ, p] : dist) {
            csv += std::to_string(step) + "," + std::to_string(joint) + "," + std::to_string(succ) +
                   "," + fmt(p) + "\n";
            if (p > best_p) {
                best_p = p;
                best = succ;
            }
        }
        joint = best;
    }
    write_text(out / "composed_controller.csv", csv);
    return kExitOk;
}

} // namespace

int run(const RunManifest& manifest) {
    try {
        switch (manifest.algorithm) {
        case Algorithm::complexity: return run_complexity(manifest);
        case Algorithm::compose: return run_compose(manifest);
        default: break;
        }
        const scenarios::ScenarioConfig config = resolve_scenario(manifest);
        if (config.type == "grid") {
            if (manifest.algorithm != Algorithm::lsmdp &&
                manifest.algorithm != Algorithm::lsmdp_consensus)
                throw ConfigError("grid scenarios run with --algo lsmdp or lsmdp-consensus");
            return run_grid(manifest, config);
        }
        if (manifest.algorithm != Algorithm::pathintegral && manifest.algorithm != Algorithm::reps)
            throw ConfigError("unicycle scenarios run with --algo pathintegral or reps");
        return run_continuous(manifest, config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case Error::Kind::config: return kExitConfig;
        case Error::Kind::numeric: return kExitNumeric;
        case Error::Kind::convergence: return kExitNonConvergence;
        }
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

int validate(const std::string& config_path, std::vector<std::string>* out) {
    std::vector<std::string> diagnostics;
    try {
        std::ifstream in(config_path);
        if (!in) throw ParseError("cannot read scenario file '" + config_path + "'");
        json data;
        try {
            in >> data;
        } catch (const json::exception& e) {
            throw ParseError("scenario file '" + config_path + "': " + e.what());
        }
        diagnostics = scenarios::validate_scenario(data);
    } catch (const Error& e) {
        diagnostics.push_back(e.what());
    }
    for (const std::string& d : diagnostics) std::cout << d << "\n";
    if (out) *out = diagnostics;
    return static_cast<int>(diagnostics.size());
}

} // namespace lsoc::cli
