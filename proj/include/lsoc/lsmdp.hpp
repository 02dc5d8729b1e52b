#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lsoc/errors.hpp"
#include "lsoc/network.hpp"
#include "lsoc/parallel.hpp"

namespace lsoc::lsmdp {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Finite-state first-exit model of a single agent: passive transition table,
/// state costs on interior states and exit costs on boundary states.
/// Boundary rows must be absorbing.
struct DiscreteModel {
    int n_states = 0;
    std::vector<int> interior;     // ascending state ids
    std::vector<int> boundary;     // ascending state ids
    Eigen::MatrixXd passive;       // row-stochastic n_states x n_states
    Eigen::VectorXd state_cost;    // q, used on interior states
    Eigen::VectorXd exit_cost;     // phi >= 0, used on boundary states

    bool is_boundary(int s) const { return boundary_mask_.at(static_cast<std::size_t>(s)) != 0; }

    /// Checks row sums (1 within 1e-12), nonnegativity, exit costs >= 0 and
    /// absorbing boundary rows. Called by make_joint_model.
    void validate() const;

    /// Internal: fills boundary_mask_ and per-state transition supports.
    void finalize();

    const std::vector<std::pair<int, double>>& support(int s) const {
        return supports_.at(static_cast<std::size_t>(s));
    }

private:
    std::vector<char> boundary_mask_;
    std::vector<std::vector<std::pair<int, double>>> supports_;
};

/// KL(p || q) for distributions over the same support size.
/// Throws SupportViolation when p(x) > 0 while q(x) = 0.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Joint first-exit model over a factorial subsystem. Joint states are tuples
/// of member states indexed row-major with the center slowest-varying. A joint
/// state is boundary iff the center agent sits at one of its boundary states;
/// neighbor boundary rows are absorbing, so the center's first-exit problem
/// stays well posed.
class JointModel {
public:
    using CostFn = std::function<double(const std::vector<int>&)>;

    const network::Subsystem& subsystem() const { return subsystem_; }
    const std::vector<DiscreteModel>& agents() const { return agents_; }
    const std::vector<double>& exit_weights() const { return exit_weights_; }

    std::int64_t total_states() const { return total_states_; }
    std::int64_t n_interior() const { return static_cast<std::int64_t>(interior_states_.size()); }
    std::int64_t n_boundary() const { return static_cast<std::int64_t>(boundary_states_.size()); }

    std::int64_t encode(const std::vector<int>& member_states) const;
    std::vector<int> decode(std::int64_t joint_id) const;

    bool is_boundary_joint(std::int64_t joint_id) const {
        return agents_[0].is_boundary(static_cast<int>(joint_id / strides_[0]));
    }
    /// Interior ordinal of a joint id (-1 if boundary), and vice versa.
    std::int64_t interior_ordinal(std::int64_t joint_id) const { return interior_index_[joint_id]; }
    std::int64_t boundary_ordinal(std::int64_t joint_id) const { return boundary_index_[joint_id]; }
    std::int64_t interior_state(std::int64_t ordinal) const { return interior_states_[ordinal]; }
    std::int64_t boundary_state(std::int64_t ordinal) const { return boundary_states_[ordinal]; }

    double state_cost(std::int64_t joint_id) const;
    /// Sum of weighted per-agent exit costs over members currently at their
    /// own boundary state.
    double exit_cost(std::int64_t joint_id) const;

    /// Iterates the joint passive row p(.|joint_id) in ascending successor
    /// order: visit(successor_joint_id, probability).
    template <typename Visitor>
    void for_each_successor(std::int64_t joint_id, Visitor&& visit) const {
        const std::vector<int> states = decode(joint_id);
        const int m = subsystem_.size();
        std::vector<std::size_t> cursor(static_cast<std::size_t>(m), 0);
        // product of per-member supports; members vary fastest at the back,
        // which matches ascending joint ids (center has the largest stride).
        while (true) {
            double p = 1.0;
            std::int64_t succ = 0;
            for (int j = 0; j < m; ++j) {
                const auto& entry = agents_[j].support(states[j])[cursor[j]];
                p *= entry.second;
                succ += strides_[j] * entry.first;
            }
            visit(succ, p);
            int j = m - 1;
            for (; j >= 0; --j) {
                if (++cursor[j] < agents_[static_cast<std::size_t>(j)].support(states[j]).size()) break;
                cursor[j] = 0;
            }
            if (j < 0) break;
        }
    }

    friend JointModel make_joint_model(network::Subsystem subsystem,
                                       std::vector<DiscreteModel> agents, CostFn state_cost,
                                       std::vector<double> exit_weights);

private:
    network::Subsystem subsystem_;
    std::vector<DiscreteModel> agents_;
    std::vector<double> exit_weights_;   // member order, center first
    CostFn state_cost_fn_;
    std::vector<std::int64_t> strides_;
    std::int64_t total_states_ = 0;
    std::vector<std::int64_t> interior_index_;   // joint id -> interior ordinal or -1
    std::vector<std::int64_t> boundary_index_;
    std::vector<std::int64_t> interior_states_;  // ordinal -> joint id
    std::vector<std::int64_t> boundary_states_;
};

/// `agents` in member order (center first). `state_cost` maps member states to
/// the joint running cost q(x̄). Exit weights must be positive with the
/// center's weight largest.
JointModel make_joint_model(network::Subsystem subsystem, std::vector<DiscreteModel> agents,
                            JointModel::CostFn state_cost, std::vector<double> exit_weights);

/// Joint running cost q(x̄) + sum over members of KL(u_j || p_j(.|x_j)) for a
/// factored joint control, one successor distribution per member.
double joint_immediate_cost(const JointModel& m, std::int64_t joint_id,
                            const std::vector<Eigen::VectorXd>& member_controls);

/// Desirability z = exp(-V) on interior/boundary joint states. Entries are
/// clamped at 1e-300; boundary entries are exp(-phi).
struct Desirability {
    Eigen::VectorXd interior;   // by interior ordinal
    Eigen::VectorXd boundary;   // by boundary ordinal

    double at(const JointModel& m, std::int64_t joint_id) const {
        const std::int64_t b = m.boundary_ordinal(joint_id);
        return b >= 0 ? boundary(b) : interior(m.interior_ordinal(joint_id));
    }
};

constexpr double kDesirabilityFloor = 1e-300;

/// Linear fixed-point system for the interior desirability,
/// z_I = (interior_coupling) z_I + (boundary_coupling) z_B.
struct DesirabilitySystem {
    SparseRowMatrix interior_coupling;   // diag(exp(-q)) * P_II
    SparseRowMatrix boundary_coupling;   // diag(exp(-q)) * P_IB
    Eigen::VectorXd boundary_values;     // exp(-phi), floored
};

/// Assembles the system and verifies every interior state can reach the
/// boundary under the passive dynamics (otherwise the fixed point iteration
/// would not contract). Throws NoBoundaryReachable.
DesirabilitySystem build_linear_system(const JointModel& m, Exec exec = Exec::parallel);

struct SolveInfo {
    int iterations = 0;
    double residual = 0.0;
};

/// Fixed-point iteration z <- Az + b until the sup-norm residual is <= eps_tol
/// and per-entry relative changes settle. Entries stay >= 1e-300.
Desirability solve_desirability_centralized(const DesirabilitySystem& sys, double eps_tol = 1e-10,
                                            std::int64_t max_iters = 1000000,
                                            Exec exec = Exec::parallel, SolveInfo* info = nullptr);

/// One joint-control row as (successor joint id, probability), ascending ids.
using SparseDistribution = std::vector<std::pair<std::int64_t, double>>;

/// u*(.|x̄) ∝ p(.|x̄) z(.), evaluated with a log-sum-exp normalizer. Zero
/// exactly where the passive row is zero. Throws DegenerateDenominator when
/// every reachable desirability sits at the clamp floor.
SparseDistribution optimal_joint_control(const JointModel& m, const Desirability& z,
                                         std::int64_t joint_id);

/// |V(x̄) - q(x̄) + log Σ p z| with V = -log z; zero at the fixed point.
double bellman_residual(const JointModel& m, const Desirability& z, std::int64_t joint_id);

/// Marginal successor distribution of the center agent (sums joint control
/// mass over neighbor successors).
Eigen::VectorXd marginal_local_control(const JointModel& m, const SparseDistribution& joint_control);

enum class RolloutMode { max_likelihood, sampled };

struct GridRollout {
    /// states[t][agent] = per-agent state id at step t (states[0] = start).
    std::vector<std::vector<int>> states;
    bool all_exited = false;
};

/// Synchronous execution: at every step each agent draws (or argmaxes, ties
/// to the lowest successor id) from its own marginal control given the joint
/// state of its subsystem. Ends at the horizon or once every agent sits on
/// its boundary.
GridRollout greedy_rollout(const network::Graph& graph, const std::vector<JointModel>& models,
                           const std::vector<Desirability>& desirabilities,
                           const std::vector<int>& start, int horizon, RolloutMode mode,
                           std::uint64_t seed);

} // namespace lsoc::lsmdp
