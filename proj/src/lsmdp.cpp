#include "lsoc/lsmdp.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "lsoc/rng.hpp"

namespace lsoc::lsmdp {

namespace {
constexpr double kRowSumTol = 1e-12;
}

void DiscreteModel::finalize() {
    boundary_mask_.assign(static_cast<std::size_t>(n_states), 0);
    for (int b : boundary) boundary_mask_[static_cast<std::size_t>(b)] = 1;
    supports_.assign(static_cast<std::size_t>(n_states), {});
    for (int s = 0; s < n_states; ++s) {
        for (int s2 = 0; s2 < n_states; ++s2) {
            const double p = passive(s, s2);
            if (p != 0.0) supports_[static_cast<std::size_t>(s)].emplace_back(s2, p);
        }
    }
}

void DiscreteModel::validate() const {
    if (passive.rows() != n_states || passive.cols() != n_states)
        throw ConfigError("passive table shape does not match the state count");
    if (static_cast<int>(interior.size() + boundary.size()) != n_states)
        throw ConfigError("interior/boundary partition does not cover the state space");
    for (int s = 0; s < n_states; ++s) {
        double row = 0.0;
        for (int s2 = 0; s2 < n_states; ++s2) {
            const double p = passive(s, s2);
            if (p < 0.0) throw ConfigError("negative passive probability at row " + std::to_string(s));
            row += p;
        }
        if (std::abs(row - 1.0) > kRowSumTol)
            throw ConfigError("passive row " + std::to_string(s) + " sums to " + std::to_string(row));
    }
    for (int b : boundary) {
        if (std::abs(passive(b, b) - 1.0) > kRowSumTol)
            throw ConfigError("boundary state " + std::to_string(b) + " is not absorbing");
        if (exit_cost(b) < 0.0)
            throw ConfigError("negative exit cost at state " + std::to_string(b));
    }
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw ConfigError("kl_divergence: distributions differ in support size");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) == 0.0) continue;
        if (q(i) == 0.0)
            throw SupportViolation("kl_divergence: p has mass where q vanishes (index " +
                                   std::to_string(i) + ")");
        sum += p(i) * std::log(p(i) / q(i));
    }
    return std::max(sum, 0.0);
}

JointModel make_joint_model(network::Subsystem subsystem, std::vector<DiscreteModel> agents,
                            JointModel::CostFn state_cost, std::vector<double> exit_weights) {
    if (agents.size() != static_cast<std::size_t>(subsystem.size()))
        throw ConfigError("joint model needs one agent model per subsystem member");
    if (exit_weights.size() != agents.size())
        throw ConfigError("joint model needs one exit weight per member");
    for (double w : exit_weights)
        if (w <= 0.0) throw ConfigError("exit weights must be positive");
    for (std::size_t j = 1; j < exit_weights.size(); ++j)
        if (exit_weights[j] > exit_weights[0] + 1e-15)
            throw ConfigError("the center exit weight must dominate the neighbors'");
    if (!state_cost) throw ConfigError("joint model needs a state cost function");

    JointModel m;
    m.subsystem_ = std::move(subsystem);
    m.agents_ = std::move(agents);
    m.exit_weights_ = std::move(exit_weights);
    m.state_cost_fn_ = std::move(state_cost);

    const int members = m.subsystem_.size();
    for (auto& a : m.agents_) {
        a.validate();
        a.finalize();
    }
    m.strides_.assign(static_cast<std::size_t>(members), 1);
    for (int j = members - 2; j >= 0; --j)
        m.strides_[static_cast<std::size_t>(j)] =
            m.strides_[static_cast<std::size_t>(j + 1)] * m.agents_[static_cast<std::size_t>(j + 1)].n_states;
    m.total_states_ = m.strides_[0] * m.agents_[0].n_states;

    m.interior_index_.assign(static_cast<std::size_t>(m.total_states_), -1);
    m.boundary_index_.assign(static_cast<std::size_t>(m.total_states_), -1);
    for (std::int64_t id = 0; id < m.total_states_; ++id) {
        const int center_state = static_cast<int>(id / m.strides_[0]);
        if (m.agents_[0].is_boundary(center_state)) {
            m.boundary_index_[static_cast<std::size_t>(id)] =
                static_cast<std::int64_t>(m.boundary_states_.size());
            m.boundary_states_.push_back(id);
        } else {
            m.interior_index_[static_cast<std::size_t>(id)] =
                static_cast<std::int64_t>(m.interior_states_.size());
            m.interior_states_.push_back(id);
        }
    }
    return m;
}

std::int64_t JointModel::encode(const std::vector<int>& member_states) const {
    std::int64_t id = 0;
    for (std::size_t j = 0; j < strides_.size(); ++j) id += strides_[j] * member_states[j];
    return id;
}

std::vector<int> JointModel::decode(std::int64_t joint_id) const {
    std::vector<int> states(strides_.size());
    for (std::size_t j = 0; j < strides_.size(); ++j) {
        states[j] = static_cast<int>(joint_id / strides_[j]);
        joint_id -= states[j] * strides_[j];
    }
    return states;
}

double JointModel::state_cost(std::int64_t joint_id) const {
    return state_cost_fn_(decode(joint_id));
}

double JointModel::exit_cost(std::int64_t joint_id) const {
    const std::vector<int> states = decode(joint_id);
    double phi = 0.0;
    for (std::size_t j = 0; j < states.size(); ++j) {
        const DiscreteModel& a = agents_[j];
        if (a.is_boundary(states[j])) phi += exit_weights_[j] * a.exit_cost(states[j]);
    }
    return phi;
}

double joint_immediate_cost(const JointModel& m, std::int64_t joint_id,
                            const std::vector<Eigen::VectorXd>& member_controls) {
    if (member_controls.size() != static_cast<std::size_t>(m.subsystem().size()))
        throw ConfigError("joint_immediate_cost: one control distribution per member expected");
    const std::vector<int> states = m.decode(joint_id);
    double cost = m.state_cost(joint_id);
    for (std::size_t j = 0; j < member_controls.size(); ++j)
        cost += kl_divergence(member_controls[j], m.agents()[j].passive.row(states[j]).transpose());
    return cost;
}

DesirabilitySystem build_linear_system(const JointModel& m, Exec exec) {
    const std::int64_t ni = m.n_interior();
    const std::int64_t nb = m.n_boundary();

    std::vector<std::vector<Eigen::Triplet<double>>> theta_rows(static_cast<std::size_t>(ni));
    std::vector<std::vector<Eigen::Triplet<double>>> omega_rows(static_cast<std::size_t>(ni));
    parallel_for(exec, ni, [&](std::int64_t row) {
        const std::int64_t id = m.interior_state(row);
        const double scale = std::exp(-m.state_cost(id));
        m.for_each_successor(id, [&](std::int64_t succ, double p) {
            const std::int64_t b = m.boundary_ordinal(succ);
            if (b >= 0)
                omega_rows[static_cast<std::size_t>(row)].emplace_back(static_cast<int>(row),
                                                                       static_cast<int>(b), scale * p);
            else
                theta_rows[static_cast<std::size_t>(row)].emplace_back(
                    static_cast<int>(row), static_cast<int>(m.interior_ordinal(succ)), scale * p);
        });
    });

    std::vector<Eigen::Triplet<double>> theta_triplets, omega_triplets;
    for (auto& r : theta_rows) theta_triplets.insert(theta_triplets.end(), r.begin(), r.end());
    for (auto& r : omega_rows) omega_triplets.insert(omega_triplets.end(), r.begin(), r.end());

    DesirabilitySystem sys;
    sys.interior_coupling.resize(ni, ni);
    sys.interior_coupling.setFromTriplets(theta_triplets.begin(), theta_triplets.end());
    sys.boundary_coupling.resize(ni, nb);
    sys.boundary_coupling.setFromTriplets(omega_triplets.begin(), omega_triplets.end());
    sys.boundary_values.resize(nb);
    for (std::int64_t b = 0; b < nb; ++b)
        sys.boundary_values(b) =
            std::max(std::exp(-m.exit_cost(m.boundary_state(b))), kDesirabilityFloor);

    // Reverse reachability: every interior row must reach a row with boundary
    // outflow, otherwise the spectral radius of the coupling hits 1.
    std::vector<char> reaches(static_cast<std::size_t>(ni), 0);
    std::queue<std::int64_t> frontier;
    for (std::int64_t r = 0; r < ni; ++r) {
        if (sys.boundary_coupling.outerIndexPtr()[r + 1] > sys.boundary_coupling.outerIndexPtr()[r]) {
            reaches[static_cast<std::size_t>(r)] = 1;
            frontier.push(r);
        }
    }
    // reverse adjacency of the interior coupling
    std::vector<std::vector<std::int64_t>> incoming(static_cast<std::size_t>(ni));
    for (std::int64_t r = 0; r < ni; ++r)
        for (SparseRowMatrix::InnerIterator it(sys.interior_coupling, r); it; ++it)
            incoming[static_cast<std::size_t>(it.col())].push_back(r);
    std::int64_t reached = static_cast<std::int64_t>(frontier.size());
    while (!frontier.empty()) {
        const std::int64_t v = frontier.front();
        frontier.pop();
        for (std::int64_t w : incoming[static_cast<std::size_t>(v)]) {
            if (!reaches[static_cast<std::size_t>(w)]) {
                reaches[static_cast<std::size_t>(w)] = 1;
                ++reached;
                frontier.push(w);
            }
        }
    }
    if (reached != ni)
        throw NoBoundaryReachable(std::to_string(ni - reached) +
                                  " interior states cannot reach the boundary");
    return sys;
}

namespace {

/// Row-parallel sparse matvec out = A x + b (deterministic per row).
void affine_apply(const SparseRowMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                  Eigen::VectorXd& out, Exec exec) {
    out.resize(a.rows());
    parallel_for(exec, a.rows(), [&](std::int64_t r) {
        double acc = b(r);
        for (SparseRowMatrix::InnerIterator it(a, r); it; ++it) acc += it.value() * x(it.col());
        out(r) = acc;
    });
}

} // namespace

Desirability solve_desirability_centralized(const DesirabilitySystem& sys, double eps_tol,
                                            std::int64_t max_iters, Exec exec, SolveInfo* info) {
    const std::int64_t n = sys.interior_coupling.rows();
    Eigen::VectorXd inflow = sys.boundary_coupling * sys.boundary_values;
    Eigen::VectorXd z = inflow.cwiseMax(kDesirabilityFloor);
    Eigen::VectorXd next(n);

    double residual = 0.0;
    std::int64_t iter = 0;
    for (; iter < max_iters; ++iter) {
        affine_apply(sys.interior_coupling, z, inflow, next, exec);
        next = next.cwiseMax(kDesirabilityFloor);
        residual = 0.0;
        double rel = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = std::abs(next(i) - z(i));
            residual = std::max(residual, d);
            rel = std::max(rel, d / std::max(std::abs(next(i)), kDesirabilityFloor));
        }
        z.swap(next);
        // The absolute criterion is the contract; the relative one keeps deep
        // low-desirability states converged as well (their magnitudes sit far
        // below the absolute tolerance on first-exit grids).
        if (residual <= eps_tol && rel <= eps_tol) break;
    }
    if (iter >= max_iters)
        throw MaxIterationsExceeded("desirability iteration did not converge within " +
                                    std::to_string(max_iters) + " iterations");
    if (info) {
        info->iterations = static_cast<int>(iter + 1);
        info->residual = residual;
    }
    Desirability d;
    d.interior = std::move(z);
    d.boundary = sys.boundary_values;
    return d;
}

SparseDistribution optimal_joint_control(const JointModel& m, const Desirability& z,
                                         std::int64_t joint_id) {
    if (m.boundary_ordinal(joint_id) >= 0)
        throw ConfigError("optimal_joint_control: joint state is boundary");
    SparseDistribution dist;
    double max_logit = -std::numeric_limits<double>::infinity();
    m.for_each_successor(joint_id, [&](std::int64_t succ, double p) {
        const double logit = std::log(p) + std::log(z.at(m, succ));
        dist.emplace_back(succ, logit);
        max_logit = std::max(max_logit, logit);
    });
    bool any_above_floor = false;
    for (const auto& [succ, logit] : dist) {
        (void)logit;
        if (z.at(m, succ) > kDesirabilityFloor) {
            any_above_floor = true;
            break;
        }
    }
    if (!any_above_floor)
        throw DegenerateDenominator("every reachable desirability underflowed the clamp");
    double norm = 0.0;
    for (auto& [succ, logit] : dist) {
        logit = std::exp(logit - max_logit);
        norm += logit;
    }
    for (auto& [succ, w] : dist) w /= norm;
    return dist;
}

double bellman_residual(const JointModel& m, const Desirability& z, std::int64_t joint_id) {
    // log-sum-exp of log p + log z over the passive row
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits;
    m.for_each_successor(joint_id, [&](std::int64_t succ, double p) {
        logits.push_back(std::log(p) + std::log(z.at(m, succ)));
        max_logit = std::max(max_logit, logits.back());
    });
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - max_logit);
    const double log_w = max_logit + std::log(acc);
    const double value = -std::log(z.at(m, joint_id));
    return std::abs(value - (m.state_cost(joint_id) - log_w));
}

Eigen::VectorXd marginal_local_control(const JointModel& m, const SparseDistribution& joint_control) {
    const std::int64_t center_stride = m.total_states() / m.agents()[0].n_states;
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(m.agents()[0].n_states);
    for (const auto& [succ, p] : joint_control) marginal(succ / center_stride) += p;
    return marginal;
}

GridRollout greedy_rollout(const network::Graph& graph, const std::vector<JointModel>& models,
                           const std::vector<Desirability>& desirabilities,
                           const std::vector<int>& start, int horizon, RolloutMode mode,
                           std::uint64_t seed) {
    const int n = graph.n_agents();
    GridRollout out;
    out.states.push_back(start);
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rngs.emplace_back(substream({seed, 0x9011u, static_cast<std::uint64_t>(i)}));

    for (int t = 0; t < horizon; ++t) {
        const std::vector<int>& current = out.states.back();
        bool all_exited = true;
        for (int i = 0; i < n; ++i)
            if (!models[static_cast<std::size_t>(i)].agents()[0].is_boundary(current[static_cast<std::size_t>(i)]))
                all_exited = false;
        if (all_exited) {
            out.all_exited = true;
            break;
        }
        std::vector<int> next(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const JointModel& m = models[static_cast<std::size_t>(i)];
            const int own = current[static_cast<std::size_t>(i)];
            if (m.agents()[0].is_boundary(own)) {
                next[static_cast<std::size_t>(i)] = own;   // absorbing
                continue;
            }
            std::vector<int> member_states(m.subsystem().members.size());
            for (std::size_t j = 0; j < member_states.size(); ++j)
                member_states[j] = current[static_cast<std::size_t>(m.subsystem().members[j])];
            const std::int64_t jid = m.encode(member_states);
            const Eigen::VectorXd marginal =
                marginal_local_control(m, optimal_joint_control(m, desirabilities[static_cast<std::size_t>(i)], jid));
            int pick = 0;
            if (mode == RolloutMode::max_likelihood) {
                double best = -1.0;
                for (int s = 0; s < marginal.size(); ++s) {
                    if (marginal(s) > best) {   // strict: ties go to the lowest id
                        best = marginal(s);
                        pick = s;
                    }
                }
            } else {
                const double u = rngs[static_cast<std::size_t>(i)].uniform();
                double cum = 0.0;
                pick = static_cast<int>(marginal.size()) - 1;
                for (int s = 0; s < marginal.size(); ++s) {
                    cum += marginal(s);
                    if (u <= cum) {
                        pick = s;
                        break;
                    }
                }
            }
            next[static_cast<std::size_t>(i)] = pick;
        }
        out.states.push_back(std::move(next));
    }
    if (!out.all_exited) {
        const std::vector<int>& last = out.states.back();
        out.all_exited = true;
        for (int i = 0; i < n; ++i)
            if (!models[static_cast<std::size_t>(i)].agents()[0].is_boundary(last[static_cast<std::size_t>(i)]))
                out.all_exited = false;
    }
    return out;
}

} // namespace lsoc::lsmdp
