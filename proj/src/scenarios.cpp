#include "lsoc/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lsoc::scenarios {

bool GridScenario::is_obstacle(int state) const {
    for (const Cell& c : obstacles)
        if (cell_state(c) == state) return true;
    return false;
}

Eigen::MatrixXd grid_passive_table(const GridScenario& scenario) {
    const int rows = scenario.rows;
    const int cols = scenario.cols;
    const int n = rows * cols;
    if (scenario.profile == PassiveProfile::custom) {
        if (scenario.custom_table.rows() != n || scenario.custom_table.cols() != n)
            throw ConfigError("custom passive table must be " + std::to_string(n) + " square");
        return scenario.custom_table;
    }
    // Random-wind defaults: per-move probability is fixed and the stay
    // probability absorbs the remainder. The altered profile pushes more mass
    // onto the moves.
    const double move = scenario.profile == PassiveProfile::standard ? 0.2 : 0.0;
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int s = r * cols + c;
            std::vector<int> moves;
            if (r > 0) moves.push_back(s - cols);
            if (r + 1 < rows) moves.push_back(s + cols);
            if (c > 0) moves.push_back(s - 1);
            if (c + 1 < cols) moves.push_back(s + 1);
            if (scenario.profile == PassiveProfile::standard) {
                for (int m : moves) p(s, m) = move;
                p(s, s) = 1.0 - move * static_cast<double>(moves.size());
            } else {   // altered: stay 0.1, neighbors share the rest evenly
                p(s, s) = 0.1;
                for (int m : moves) p(s, m) = 0.9 / static_cast<double>(moves.size());
            }
        }
    }
    return p;
}

namespace {

lsmdp::DiscreteModel grid_agent_model(const GridScenario& scenario, int agent,
                                      const Eigen::MatrixXd& passive) {
    const int n = scenario.rows * scenario.cols;
    lsmdp::DiscreteModel model;
    model.n_states = n;
    const int exit_state = scenario.cell_state(scenario.agents[static_cast<std::size_t>(agent)].exit);
    for (int s = 0; s < n; ++s)
        (s == exit_state ? model.boundary : model.interior).push_back(s);
    model.passive = passive;
    model.passive.row(exit_state).setZero();
    model.passive(exit_state, exit_state) = 1.0;   // absorbing exit
    model.state_cost = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s)
        model.state_cost(s) = scenario.is_obstacle(s) ? scenario.obstacle_cost : scenario.regular_cost;
    model.exit_cost = Eigen::VectorXd::Zero(n);
    model.exit_cost(exit_state) = scenario.agents[static_cast<std::size_t>(agent)].exit_cost;
    return model;
}

double weight_of(const std::map<std::pair<int, int>, double>& weights, int i, int j) {
    const auto it = weights.find({i, j});
    return it == weights.end() ? 0.0 : it->second;
}

} // namespace

GridBuild build_grid_scenario(const GridScenario& scenario) {
    const int n_agents = scenario.graph.n_agents();
    if (static_cast<int>(scenario.agents.size()) != n_agents)
        throw ConfigError("grid scenario needs one agent entry per graph node");
    for (const GridAgent& a : scenario.agents) {
        for (const Cell& c : {a.initial, a.exit}) {
            if (c.row < 1 || c.row > scenario.rows || c.col < 1 || c.col > scenario.cols)
                throw ConfigError("agent cell outside the grid");
        }
        if (scenario.is_obstacle(scenario.cell_state(a.initial)) ||
            scenario.is_obstacle(scenario.cell_state(a.exit)))
            throw ConfigError("agent initial/exit cells must not be obstacles");
    }

    const Eigen::MatrixXd passive = grid_passive_table(scenario);
    GridBuild build;
    for (int i = 0; i < n_agents; ++i)
        build.agent_models.push_back(grid_agent_model(scenario, i, passive));

    const int cols = scenario.cols;
    for (int i = 0; i < n_agents; ++i) {
        network::Subsystem sub = network::factorial_subsystem(scenario.graph, i);
        std::vector<lsmdp::DiscreteModel> members;
        std::vector<double> exit_weights;
        for (int member : sub.members) {
            members.push_back(build.agent_models[static_cast<std::size_t>(member)]);
            exit_weights.push_back(member == i ? scenario.exit_weight_self
                                               : scenario.exit_weight_neighbor);
        }
        // q_i(x̄): Manhattan pair terms to weighted neighbors plus the product
        // of obstacle costs over the center and its weighted neighbors.
        auto cost = [scenario_copy = scenario, sub, cols](const std::vector<int>& states) {
            const int center = sub.center;
            const int own = states[0];
            const int r0 = own / cols, c0 = own % cols;
            double q = 0.0;
            double obstacle_product =
                scenario_copy.is_obstacle(own) ? scenario_copy.obstacle_cost : scenario_copy.regular_cost;
            for (std::size_t j = 1; j < states.size(); ++j) {
                const int other = sub.members[j];
                const double w = weight_of(scenario_copy.weights, center, other);
                if (w == 0.0) continue;
                const int r1 = states[j] / cols, c1 = states[j] % cols;
                q += w * (std::abs(r0 - r1) + std::abs(c0 - c1));
                obstacle_product *= scenario_copy.is_obstacle(states[j]) ? scenario_copy.obstacle_cost
                                                                         : scenario_copy.regular_cost;
            }
            return q + obstacle_product;
        };
        build.joint_models.push_back(
            lsmdp::make_joint_model(sub, std::move(members), cost, std::move(exit_weights)));
    }
    return build;
}

void unicycle_drift(Eigen::Ref<const Eigen::VectorXd> x, double, Eigen::Ref<Eigen::VectorXd> out) {
    out(0) = x(2) * std::cos(x(3));
    out(1) = x(2) * std::sin(x(3));
    out(2) = 0.0;
    out(3) = 0.0;
}

Eigen::MatrixXd unicycle_control_matrix() {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(4, 2);
    b(2, 0) = 1.0;
    b(3, 1) = 1.0;
    return b;
}

namespace {

pathintegral::AgentDynamics unicycle_agent(double sigma, double nu) {
    pathintegral::AgentDynamics a;
    a.state_dim = 4;
    a.control_dim = 2;
    a.actuated_dim = 2;
    a.drift = unicycle_drift;
    a.control_matrix = unicycle_control_matrix();
    a.noise_factor = Eigen::Vector2d(sigma, nu).asDiagonal();
    return a;
}

} // namespace

pathintegral::CostSpec build_unicycle_cost(const UnicycleScenario& scenario, int agent,
                                           bool use_reps_weights) {
    const network::Subsystem sub = network::factorial_subsystem(scenario.graph, agent);
    const auto& weights =
        use_reps_weights && !scenario.reps_weights.empty() ? scenario.reps_weights : scenario.weights;

    // d^max defaults to the initial goal/pair distances.
    auto offset_of = [&](int i, int j) {
        if (scenario.distance_offsets) {
            const auto it = scenario.distance_offsets->find({i, j});
            if (it != scenario.distance_offsets->end()) return it->second;
        }
        const Eigen::Vector2d pi = scenario.agents[static_cast<std::size_t>(i)].initial.head<2>();
        if (i == j) {
            const Eigen::Vector2d gi = scenario.agents[static_cast<std::size_t>(i)].exit.head<2>();
            return (pi - gi).norm();
        }
        const Eigen::Vector2d pj = scenario.agents[static_cast<std::size_t>(j)].initial.head<2>();
        return (pi - pj).norm();
    };

    struct PairTerm {
        int member = 0;   // position in the joint state
        double weight = 0.0;
        double offset = 0.0;
    };
    std::vector<PairTerm> pair_terms;
    for (std::size_t j = 1; j < sub.members.size(); ++j) {
        const double w = weight_of(weights, agent, sub.members[j]);
        if (w != 0.0)
            pair_terms.push_back({static_cast<int>(j), w, offset_of(agent, sub.members[j])});
    }
    const double goal_weight = weight_of(weights, agent, agent);
    const double goal_offset = offset_of(agent, agent);
    const Eigen::Vector2d goal = scenario.agents[static_cast<std::size_t>(agent)].exit.head<2>();

    pathintegral::CostSpec cost;
    cost.temperature = scenario.lambda;
    cost.control_weight =
        Eigen::MatrixXd::Identity(2 * sub.size(), 2 * sub.size());
    cost.state_cost = [pair_terms, goal_weight, goal_offset, goal,
                       obstacles = scenario.obstacles, obstacle_cost = scenario.obstacle_cost](
                          const Eigen::VectorXd& x, double) {
        const Eigen::Vector2d own = x.head<2>();
        double q = goal_weight * ((own - goal).norm() - goal_offset);
        for (const PairTerm& term : pair_terms) {
            const Eigen::Vector2d other = x.segment<2>(4 * term.member);
            q += term.weight * ((own - other).norm() - term.offset);
        }
        for (const Rectangle& rect : obstacles)
            if (rect.contains(own(0), own(1))) {
                q += obstacle_cost;
                break;
            }
        return q;
    };
    // exit costs: weighted distances of every member to its own goal
    std::vector<Eigen::Vector2d> member_goals;
    std::vector<double> member_weights;
    for (std::size_t j = 0; j < sub.members.size(); ++j) {
        member_goals.push_back(scenario.agents[static_cast<std::size_t>(sub.members[j])].exit.head<2>());
        member_weights.push_back(j == 0 ? scenario.exit_weight_self : scenario.exit_weight_neighbor);
    }
    cost.terminal_cost = [member_goals, member_weights,
                          terminal_weight = scenario.terminal_weight](const Eigen::VectorXd& x) {
        double phi = 0.0;
        for (std::size_t j = 0; j < member_goals.size(); ++j)
            phi += member_weights[j] * terminal_weight *
                   (x.segment<2>(4 * static_cast<Eigen::Index>(j)) - member_goals[j]).norm();
        return phi;
    };
    return cost;
}

pathintegral::Team build_unicycle_team(const UnicycleScenario& scenario, bool use_reps_weights) {
    const int n = scenario.graph.n_agents();
    if (static_cast<int>(scenario.agents.size()) != n)
        throw ConfigError("unicycle scenario needs one agent entry per graph node");
    pathintegral::Team team{scenario.graph, {}, {}, {}, {}};
    for (int i = 0; i < n; ++i) {
        const network::Subsystem sub = network::factorial_subsystem(scenario.graph, i);
        std::vector<pathintegral::AgentDynamics> members;
        std::vector<Eigen::MatrixXd> noise;
        for (std::size_t j = 0; j < sub.members.size(); ++j) {
            members.push_back(unicycle_agent(scenario.sigma, scenario.nu));
            noise.push_back(Eigen::Vector2d(scenario.sampling_sigma, scenario.sampling_nu).asDiagonal());
        }
        team.dynamics.emplace_back(sub, std::move(members));
        team.costs.push_back(build_unicycle_cost(scenario, i, use_reps_weights));
        team.sampling_noise.push_back(std::move(noise));
        team.initial_states.push_back(scenario.agents[static_cast<std::size_t>(i)].initial);
    }
    return team;
}

// ---------------------------------------------------------------------------
// configuration parsing

namespace {

json builtin_presets();

std::pair<int, int> parse_pair_key(const std::string& key) {
    const auto sep = key.find('_');
    if (sep == std::string::npos)
        throw ParseError("weight key '" + key + "' must look like '1_2'");
    try {
        const int a = std::stoi(key.substr(0, sep));
        const int b = std::stoi(key.substr(sep + 1));
        return {a - 1, b - 1};   // configs number agents from 1
    } catch (const std::exception&) {
        throw ParseError("weight key '" + key + "' must look like '1_2'");
    }
}

std::map<std::pair<int, int>, double> parse_weights(const json& w) {
    std::map<std::pair<int, int>, double> out;
    for (const auto& [key, value] : w.items()) out[parse_pair_key(key)] = value.get<double>();
    return out;
}

network::Graph parse_graph(const json& g) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : g.at("edges"))
        edges.emplace_back(e.at(0).get<int>() - 1, e.at(1).get<int>() - 1);
    return network::build_graph(g.at("n_agents").get<int>(), edges);
}

} // namespace

GridScenario make_grid_scenario(const ScenarioConfig& config) {
    if (config.type != "grid") throw ConfigError("scenario '" + config.name + "' is not a grid");
    const json& data = config.data;
    GridScenario s;
    s.graph = parse_graph(data.at("graph"));
    const json& grid = data.at("grid");
    s.rows = grid.at("rows").get<int>();
    s.cols = grid.at("cols").get<int>();
    for (const auto& cell : grid.value("obstacles", json::array()))
        s.obstacles.push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
    for (const auto& agent : data.at("agents")) {
        GridAgent a;
        a.initial = {agent.at("initial").at(0).get<int>(), agent.at("initial").at(1).get<int>()};
        a.exit = {agent.at("exit").at(0).get<int>(), agent.at("exit").at(1).get<int>()};
        a.exit_cost = agent.value("exit_cost", 0.0);
        s.agents.push_back(a);
    }
    const json& costs = data.at("costs");
    s.weights = parse_weights(costs.value("w", json::object()));
    s.obstacle_cost = costs.value("obstacle_cost", 30.0);
    s.regular_cost = costs.value("regular_cost", 2.2);
    s.exit_weight_self = costs.value("exit_weight_self", 1.0);
    s.exit_weight_neighbor = costs.value("exit_weight_neighbor", 0.5);
    const json& dynamics = data.value("dynamics", json::object());
    const std::string profile = dynamics.value("profile", "default");
    if (profile == "default")
        s.profile = PassiveProfile::standard;
    else if (profile == "altered")
        s.profile = PassiveProfile::altered;
    else if (profile == "custom") {
        s.profile = PassiveProfile::custom;
        const auto& table = dynamics.at("passive_table");
        const int n = s.rows * s.cols;
        s.custom_table.resize(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) s.custom_table(r, c) = table.at(r).at(c).get<double>();
    } else {
        throw ConfigError("unknown passive profile '" + profile + "'");
    }
    const json& solver = data.value("solver", json::object());
    s.tolerance = solver.value("tolerance", 1e-10);
    s.max_iterations = solver.value("max_iterations", static_cast<std::int64_t>(1000000));
    s.horizon = solver.value("horizon", 40);
    s.mode = solver.value("mode", std::string("max-likelihood")) == std::string("sampled")
                 ? lsmdp::RolloutMode::sampled
                 : lsmdp::RolloutMode::max_likelihood;
    return s;
}

UnicycleScenario make_unicycle_scenario(const ScenarioConfig& config) {
    if (config.type != "unicycle")
        throw ConfigError("scenario '" + config.name + "' is not a unicycle team");
    const json& data = config.data;
    UnicycleScenario s;
    s.graph = parse_graph(data.at("graph"));
    for (const auto& agent : data.at("agents")) {
        UnicycleAgent a;
        for (int k = 0; k < 4; ++k) {
            a.initial(k) = agent.at("initial").at(k).get<double>();
            a.exit(k) = agent.at("exit").at(k).get<double>();
        }
        s.agents.push_back(a);
    }
    const json& dynamics = data.value("dynamics", json::object());
    s.sigma = dynamics.value("sigma", 0.1);
    s.nu = dynamics.value("nu", 0.05);
    s.sampling_sigma = dynamics.value("sampling_sigma", 0.75);
    s.sampling_nu = dynamics.value("sampling_nu", 0.65);
    s.lambda = dynamics.value("lambda", 1.0);
    const json& costs = data.at("costs");
    if (costs.contains("sampling")) s.weights = parse_weights(costs.at("sampling").at("w"));
    if (costs.contains("reps")) s.reps_weights = parse_weights(costs.at("reps").at("w"));
    s.terminal_weight = costs.value("terminal_weight", 1.0);
    s.exit_weight_self = costs.value("exit_weight_self", 1.0);
    s.exit_weight_neighbor = costs.value("exit_weight_neighbor", 0.5);
    s.obstacle_cost = costs.value("obstacle_cost", 50.0);
    for (const auto& rect : costs.value("obstacles", json::array()))
        s.obstacles.push_back({rect.at("xmin").get<double>(), rect.at("xmax").get<double>(),
                               rect.at("ymin").get<double>(), rect.at("ymax").get<double>()});
    const json& solver = data.at("solver");
    s.t_final = solver.at("t_f").get<double>();
    s.control_cycle = solver.value("control_cycle", 0.2);
    s.segments = solver.value("segments", 7);
    s.rollouts = solver.value("rollouts", 400);
    s.eps_min = solver.value("eps_min", 0.2);
    const json& reps = solver.value("reps", json::object());
    s.reps.delta = reps.value("delta", 25.0);
    s.reps.rollouts_init = reps.value("rollouts_init", 400);
    s.reps.rollouts_iter = reps.value("rollouts_iter", 150);
    s.reps.max_policy_iters = reps.value("max_policy_iters", 10);
    s.reps.policy_tol = reps.value("policy_tol", 1e-3);
    s.reps.policy_init_scale = reps.value("policy_init_scale", 1.0);
    s.reps_execute_mean = reps.value("execute_mean", false);
    return s;
}

ScenarioConfig parse_scenario(const json& data) {
    ScenarioConfig config;
    try {
        config.name = data.value("name", "unnamed");
        config.type = data.at("type").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario config: ") + e.what());
    }
    if (config.type != "grid" && config.type != "unicycle")
        throw ConfigError("unknown scenario type '" + config.type + "'");
    config.data = data;
    return config;
}

ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read scenario file '" + path + "'");
    json data;
    try {
        in >> data;
    } catch (const json::exception& e) {
        throw ParseError("scenario file '" + path + "': " + e.what());
    }
    return parse_scenario(data);
}

std::vector<std::string> validate_scenario(const json& data) {
    std::vector<std::string> diagnostics;
    auto complain = [&](const std::string& field, const std::string& message) {
        diagnostics.push_back(field + ": " + message);
    };
    if (!data.contains("type") || !data.at("type").is_string()) {
        complain("type", "missing scenario type ('grid' or 'unicycle')");
        return diagnostics;
    }
    const std::string type = data.at("type").get<std::string>();
    if (type != "grid" && type != "unicycle") {
        complain("type", "unknown scenario type '" + type + "'");
        return diagnostics;
    }
    if (!data.contains("graph")) {
        complain("graph", "missing section");
    } else {
        try {
            parse_graph(data.at("graph"));
        } catch (const std::exception& e) {
            complain("graph", e.what());
        }
    }
    if (type == "grid") {
        try {
            const GridScenario s = make_grid_scenario(parse_scenario(data));
            bool table_ok = true;
            if (s.profile == PassiveProfile::custom) {
                const int n = s.rows * s.cols;
                for (int r = 0; r < n; ++r) {
                    const double sum = s.custom_table.row(r).sum();
                    if (std::abs(sum - 1.0) > 1e-12) {
                        complain("dynamics.passive_table[row " + std::to_string(r) + "]",
                                 "row sums to " + std::to_string(sum));
                        table_ok = false;
                    }
                    if (s.custom_table.row(r).minCoeff() < 0.0) {
                        complain("dynamics.passive_table[row " + std::to_string(r) + "]",
                                 "negative probability");
                        table_ok = false;
                    }
                }
            }
            if (table_ok) build_grid_scenario(s);   // reuses the structural checks
        } catch (const std::exception& e) {
            complain("grid", e.what());
        }
    } else {
        try {
            const UnicycleScenario s = make_unicycle_scenario(parse_scenario(data));
            if (s.t_final <= 0.0) complain("solver.t_f", "exit time must be positive");
            if (s.control_cycle <= 0.0) complain("solver.control_cycle", "must be positive");
            if (s.segments < 1) complain("solver.segments", "must be at least 1");
            if (s.rollouts < 1) complain("solver.rollouts", "must be at least 1");
            if (s.sigma < 0 || s.nu < 0) complain("dynamics", "noise levels must be nonnegative");
            if (s.reps.delta <= 0) complain("solver.reps.delta", "must be positive");
            build_unicycle_team(s);
        } catch (const std::exception& e) {
            complain("unicycle", e.what());
        }
    }
    return diagnostics;
}

void apply_override(json& data, const std::string& dotted_path, const std::string& value) {
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;   // plain string
    }
    json* node = &data;
    std::stringstream tokens(dotted_path);
    std::string token;
    std::vector<std::string> parts;
    while (std::getline(tokens, token, '.')) parts.push_back(token);
    if (parts.empty()) throw ParseError("empty override path");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        const std::string& part = parts[i];
        if (node->is_array()) {
            node = &node->at(static_cast<std::size_t>(std::stoul(part)));
        } else {
            node = &(*node)[part];
        }
    }
    if (node->is_array())
        node->at(static_cast<std::size_t>(std::stoul(parts.back()))) = parsed;
    else
        (*node)[parts.back()] = parsed;
}

namespace {

json builtin_presets() {
    static const json presets = json::parse(R"JSON(
{
  "grid-default": {
    "name": "grid-default",
    "type": "grid",
    "graph": {"n_agents": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
    "grid": {"rows": 5, "cols": 5, "obstacles": [[2, 5], [2, 2], [4, 2], [4, 4]]},
    "agents": [
      {"initial": [1, 5], "exit": [5, 5]},
      {"initial": [1, 1], "exit": [5, 5]},
      {"initial": [1, 5], "exit": [5, 1]}
    ],
    "costs": {"w": {"1_2": 3.5, "2_1": 3.5}, "obstacle_cost": 30.0, "regular_cost": 2.2},
    "dynamics": {"profile": "default"},
    "solver": {"tolerance": 1e-10, "max_iterations": 1000000, "horizon": 40, "mode": "max-likelihood"}
  },
  "grid-altered-wind": {
    "name": "grid-altered-wind",
    "type": "grid",
    "graph": {"n_agents": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
    "grid": {"rows": 5, "cols": 5, "obstacles": [[2, 5], [2, 2], [4, 2], [4, 4]]},
    "agents": [
      {"initial": [1, 5], "exit": [5, 5]},
      {"initial": [1, 1], "exit": [5, 5]},
      {"initial": [1, 5], "exit": [5, 1]}
    ],
    "costs": {"w": {"1_2": 3.5, "2_1": 3.5}, "obstacle_cost": 30.0, "regular_cost": 2.2},
    "dynamics": {"profile": "altered"},
    "solver": {"tolerance": 1e-10, "max_iterations": 1000000, "horizon": 40, "mode": "max-likelihood"}
  },
  "tri-open": {
    "name": "tri-open",
    "type": "unicycle",
    "graph": {"n_agents": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
    "agents": [
      {"initial": [5, 5, 0.5, 0], "exit": [45, 25, 0, 0]},
      {"initial": [5, 45, 0.5, 0], "exit": [45, 25, 0, 0]},
      {"initial": [5, 25, 0.5, 0], "exit": [45, 25, 0, 0]}
    ],
    "costs": {
      "sampling": {"w": {"1_1": 0.75, "2_2": 0.75, "3_3": 1.0, "1_2": 1.5, "2_1": 1.5}},
      "reps": {"w": {"1_1": 0.1, "2_2": 0.1, "3_3": 0.1, "1_2": 0.2, "2_1": 0.2}},
      "terminal_weight": 1.0
    },
    "dynamics": {"sigma": 0.1, "nu": 0.05, "sampling_sigma": 0.75, "sampling_nu": 0.65, "lambda": 0.00625},
    "solver": {
      "t_f": 25.0, "control_cycle": 0.2, "segments": 7, "rollouts": 400,
      "reps": {"delta": 25.0, "rollouts_init": 400, "rollouts_iter": 150, "max_policy_iters": 2,
               "policy_tol": 1e-3, "policy_init_scale": 1.0}
    }
  },
  "tri-cluttered": {
    "name": "tri-cluttered",
    "type": "unicycle",
    "graph": {"n_agents": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
    "agents": [
      {"initial": [45, 5, 0.35, 3.141592653589793], "exit": [45, 45, 0, 1.5707963267948966]},
      {"initial": [5, 5, 0.65, 0], "exit": [45, 45, 0, 1.5707963267948966]},
      {"initial": [45, 5, 0.5, 3.141592653589793], "exit": [5, 45, 0, 3.141592653589793]}
    ],
    "costs": {
      "sampling": {"w": {"1_1": 1.0, "2_2": 1.0, "3_3": 1.0, "1_2": 1.5, "2_1": 0.5}},
      "reps": {"w": {"1_1": 0.18, "2_2": 0.18, "3_3": 0.18, "1_2": 0.27, "2_1": 0.1}},
      "terminal_weight": 1.0,
      "obstacle_cost": 50.0,
      "obstacles": [
        {"xmin": 12.0, "xmax": 22.0, "ymin": 15.0, "ymax": 28.0},
        {"xmin": 28.0, "xmax": 38.0, "ymin": 22.0, "ymax": 35.0}
      ]
    },
    "dynamics": {"sigma": 0.1, "nu": 0.05, "sampling_sigma": 0.75, "sampling_nu": 0.65, "lambda": 0.00625},
    "solver": {
      "t_f": 30.0, "control_cycle": 0.2, "segments": 18, "rollouts": 400,
      "reps": {"delta": 50.0, "rollouts_init": 400, "rollouts_iter": 150, "max_policy_iters": 2,
               "policy_tol": 1e-3, "policy_init_scale": 1.0}
    }
  },
  "line-9": {
    "name": "line-9",
    "type": "unicycle",
    "graph": {"n_agents": 9,
              "edges": [[1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 8], [8, 9]]},
    "agents": [
      {"initial": [10, 90, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 80, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 70, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 60, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 50, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 40, 0.5, 0], "exit": [90, 65, 0, 0]},
      {"initial": [10, 30, 0.5, 0], "exit": [90, 25, 0, 0]},
      {"initial": [10, 20, 0.5, 0], "exit": [90, 25, 0, 0]},
      {"initial": [10, 10, 0.5, 0], "exit": [90, 10, 0, 0]}
    ],
    "costs": {
      "sampling": {"w": {
        "1_2": 1.0, "2_3": 1.0, "3_4": 1.0, "6_5": 1.0, "7_8": 1.0, "8_7": 1.0, "9_9": 1.0,
        "1_1": 0.5, "2_2": 0.5, "3_3": 0.5, "4_4": 0.5, "5_5": 0.5, "6_6": 0.5, "7_7": 0.5,
        "8_8": 0.5, "4_3": 0.5, "4_5": 0.5, "5_4": 0.5, "5_6": 0.5
      }},
      "reps": {"w": {
        "1_2": 0.2, "2_3": 0.2, "3_4": 0.2, "6_5": 0.2, "7_8": 0.2, "8_7": 0.2, "9_9": 0.2,
        "1_1": 0.1, "2_2": 0.1, "3_3": 0.1, "4_4": 0.1, "5_5": 0.1, "6_6": 0.1, "7_7": 0.1,
        "8_8": 0.1, "4_3": 0.1, "4_5": 0.1, "5_4": 0.1, "5_6": 0.1
      }},
      "terminal_weight": 1.0
    },
    "dynamics": {"sigma": 0.1, "nu": 0.05, "sampling_sigma": 0.75, "sampling_nu": 0.65, "lambda": 0.00625},
    "solver": {
      "t_f": 40.0, "control_cycle": 0.2, "segments": 7, "rollouts": 400,
      "reps": {"delta": 25.0, "rollouts_init": 400, "rollouts_iter": 150, "max_policy_iters": 2,
               "policy_tol": 1e-3, "policy_init_scale": 1.0}
    }
  }
}
)JSON");
    return presets;
}

} // namespace

std::vector<std::string> list_builtin_scenarios() {
    const json presets = builtin_presets();
    std::vector<std::string> names;
    for (const auto& [name, value] : presets.items()) names.push_back(name);
    std::sort(names.begin(), names.end());
    return names;
}

ScenarioConfig builtin_scenario(const std::string& name) {
    const json presets = builtin_presets();
    if (!presets.contains(name)) {
        std::string known;
        for (const std::string& n : list_builtin_scenarios()) {
            if (!known.empty()) known += ", ";
            known += n;
        }
        throw ConfigError("unknown scenario '" + name + "'; available: " + known);
    }
    return parse_scenario(presets.at(name));
}

} // namespace lsoc::scenarios
