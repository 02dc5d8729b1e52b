#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsoc/errors.hpp"
#include "lsoc/lsmdp.hpp"
#include "lsoc/pathintegral.hpp"
#include "lsoc/reps.hpp"

// nlohmann::json forward use
#include <json.hpp>

namespace lsoc::scenarios {

using nlohmann::json;

/// Grid cell, 1-based row/column as in the config files.
struct Cell {
    int row = 1;
    int col = 1;
    bool operator==(const Cell&) const = default;
};

enum class PassiveProfile { standard, altered, custom };

struct GridAgent {
    Cell initial;
    Cell exit;
    double exit_cost = 0.0;
};

struct GridScenario {
    network::Graph graph{1, {}};
    int rows = 5;
    int cols = 5;
    std::vector<Cell> obstacles;
    std::vector<GridAgent> agents;
    /// Pairwise Manhattan-distance weights, 0-based agent pairs.
    std::map<std::pair<int, int>, double> weights;
    double obstacle_cost = 30.0;
    double regular_cost = 2.2;
    double exit_weight_self = 1.0;
    double exit_weight_neighbor = 0.5;
    PassiveProfile profile = PassiveProfile::standard;
    Eigen::MatrixXd custom_table;   // used when profile == custom
    double tolerance = 1e-10;
    std::int64_t max_iterations = 1000000;
    int horizon = 40;
    lsmdp::RolloutMode mode = lsmdp::RolloutMode::max_likelihood;

    int cell_state(const Cell& c) const { return (c.row - 1) * cols + (c.col - 1); }
    bool is_obstacle(int state) const;
};

struct GridBuild {
    std::vector<lsmdp::DiscreteModel> agent_models;
    std::vector<lsmdp::JointModel> joint_models;   // one per agent's subsystem
};

/// Per-agent models plus joint models over each factorial subsystem, with the
/// Manhattan pair costs and obstacle-product costs of the grid benchmark.
GridBuild build_grid_scenario(const GridScenario& scenario);

/// Single-agent passive table for the given profile (row-stochastic; exit row
/// made absorbing by the model builder).
Eigen::MatrixXd grid_passive_table(const GridScenario& scenario);

struct Rectangle {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool contains(double x, double y) const {
        return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
    }
};

struct UnicycleAgent {
    Eigen::Vector4d initial;   // (x, y, v, phi)
    Eigen::Vector4d exit;
};

struct UnicycleScenario {
    network::Graph graph{1, {}};
    std::vector<UnicycleAgent> agents;
    double sigma = 0.1;            // forward-acceleration noise level
    double nu = 0.05;              // turn-rate noise level
    double sampling_sigma = 0.75;  // exploration noise while sampling rollouts
    double sampling_nu = 0.65;
    double lambda = 1.0;
    double t_final = 25.0;
    double control_cycle = 0.2;
    int segments = 7;
    int rollouts = 400;
    double eps_min = 0.2;
    /// Pairwise distance weights (0-based pairs; w[{i,i}] is the goal weight).
    std::map<std::pair<int, int>, double> weights;
    std::map<std::pair<int, int>, double> reps_weights;   // optional REPS variant
    double terminal_weight = 1.0;
    double exit_weight_self = 1.0;
    double exit_weight_neighbor = 0.5;
    std::vector<Rectangle> obstacles;
    double obstacle_cost = 50.0;
    /// d^max regularizers default to the initial distances.
    std::optional<std::map<std::pair<int, int>, double>> distance_offsets;
    reps::RepsParams reps;
    bool reps_execute_mean = false;
};

/// Eq.-(50)-style kinematics: states (x, y, v, phi), controls (acceleration,
/// turn rate) acting on the trailing two components.
void unicycle_drift(Eigen::Ref<const Eigen::VectorXd> x, double t, Eigen::Ref<Eigen::VectorXd> out);
Eigen::MatrixXd unicycle_control_matrix();

/// Joint running cost of agent i's subsystem: goal-distance and
/// neighbor-distance terms offset by their d^max regularizers, plus the soft
/// obstacle penalty on the center agent.
pathintegral::CostSpec build_unicycle_cost(const UnicycleScenario& scenario, int agent,
                                           bool use_reps_weights = false);

/// Full team: per-agent joint dynamics, costs and exploration noise factors.
pathintegral::Team build_unicycle_team(const UnicycleScenario& scenario,
                                       bool use_reps_weights = false);

/// Scenario configuration as parsed JSON plus its type tag.
struct ScenarioConfig {
    std::string name;
    std::string type;   // "grid" | "unicycle"
    json data;
};

std::vector<std::string> list_builtin_scenarios();
/// Throws ConfigError on unknown names, listing the valid ones.
ScenarioConfig builtin_scenario(const std::string& name);

ScenarioConfig load_scenario_file(const std::string& path);
ScenarioConfig parse_scenario(const json& data);

/// Structural and numeric checks; returns "field: message" diagnostics.
std::vector<std::string> validate_scenario(const json& data);

GridScenario make_grid_scenario(const ScenarioConfig& config);
UnicycleScenario make_unicycle_scenario(const ScenarioConfig& config);

/// Applies one `path.to.field=value` override (value parsed as JSON when
/// possible, else kept as string). Array elements are addressed numerically.
void apply_override(json& data, const std::string& dotted_path, const std::string& value);

} // namespace lsoc::scenarios
