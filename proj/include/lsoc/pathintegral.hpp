#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lsoc/errors.hpp"
#include "lsoc/network.hpp"
#include "lsoc/parallel.hpp"
#include "lsoc/rng.hpp"

namespace lsoc::pathintegral {

/// Control-affine Itô model of one agent,
///   dx = f(x,t) dt + B(x) [u dt + σ dw].
/// States are ordered with the directly actuated components last: the top
/// (state_dim - actuated_dim) rows of B are zero.
struct AgentDynamics {
    int state_dim = 0;     // M
    int control_dim = 0;   // P
    int actuated_dim = 0;  // D, trailing state components

    /// f(x, t); writes a state_dim vector.
    std::function<void(Eigen::Ref<const Eigen::VectorXd>, double, Eigen::Ref<Eigen::VectorXd>)> drift;
    /// Constant control matrix (state_dim x control_dim); used unless
    /// control_matrix_fn is set.
    Eigen::MatrixXd control_matrix;
    /// Optional state-dependent control matrix.
    std::function<Eigen::MatrixXd(Eigen::Ref<const Eigen::VectorXd>)> control_matrix_fn;
    /// Noise covariance factor σ (control_dim x control_dim).
    Eigen::MatrixXd noise_factor;

    Eigen::MatrixXd control_matrix_at(Eigen::Ref<const Eigen::VectorXd> x) const {
        return control_matrix_fn ? control_matrix_fn(x) : control_matrix;
    }
    bool constant_control_matrix() const { return !control_matrix_fn; }
};

/// Joint dynamics of a factorial subsystem; the joint state is the
/// concatenation of member states in member order (center first).
class JointDynamics {
public:
    JointDynamics(network::Subsystem subsystem, std::vector<AgentDynamics> agents);

    const network::Subsystem& subsystem() const { return subsystem_; }
    const std::vector<AgentDynamics>& agents() const { return agents_; }

    int state_dim() const { return state_dim_; }
    int control_dim() const { return control_dim_; }
    int actuated_dim() const { return actuated_dim_; }

    int state_offset(int member) const { return state_offsets_[static_cast<std::size_t>(member)]; }
    int control_offset(int member) const { return control_offsets_[static_cast<std::size_t>(member)]; }
    int actuated_offset(int member) const { return actuated_offsets_[static_cast<std::size_t>(member)]; }

    void drift(const Eigen::VectorXd& x, double t, Eigen::VectorXd& out) const;
    /// Drift restricted to the directly actuated components.
    void actuated_drift(const Eigen::VectorXd& x, double t, Eigen::VectorXd& out) const;
    /// Gather of the directly actuated components of a joint state.
    Eigen::VectorXd actuated_part(const Eigen::VectorXd& x) const;

    /// Block-diagonal B̄_d(x): actuated_dim x control_dim.
    Eigen::MatrixXd actuated_control_matrix(const Eigen::VectorXd& x) const;
    /// Full B̄(x): state_dim x control_dim (zero on non-actuated rows).
    Eigen::MatrixXd full_control_matrix(const Eigen::VectorXd& x) const;
    /// Block-diagonal σ̄: control_dim x control_dim.
    const Eigen::MatrixXd& noise_factor() const { return joint_noise_; }

    /// Diffusion metric H(x) = B̄_d σ̄ σ̄ᵀ B̄_dᵀ (actuated_dim square).
    Eigen::MatrixXd diffusion_metric(const Eigen::VectorXd& x) const;
    bool constant_control_matrices() const { return constant_B_; }

private:
    network::Subsystem subsystem_;
    std::vector<AgentDynamics> agents_;
    std::vector<int> state_offsets_, control_offsets_, actuated_offsets_;
    int state_dim_ = 0, control_dim_ = 0, actuated_dim_ = 0;
    Eigen::MatrixXd joint_noise_;
    bool constant_B_ = true;
};

/// Joint running/terminal costs of a subsystem:
///   c(x̄, ū) = q(x̄, t) + ū ᵀ R̄ ū / 2,  terminal φ(x̄), temperature λ.
struct CostSpec {
    std::function<double(const Eigen::VectorXd&, double)> state_cost;   // q
    /// Gradient of q with respect to the directly actuated components;
    /// leave empty for state-gradient-free costs (treated as zero).
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> state_cost_actuated_gradient;
    Eigen::MatrixXd control_weight;                                     // R̄, positive definite
    std::function<double(const Eigen::VectorXd&)> terminal_cost;        // φ
    double temperature = 1.0;                                           // λ

    /// ‖σ̄σ̄ᵀ − λ R̄⁻¹‖_F; the estimators stay well defined when nonzero, the
    /// residual is surfaced so callers can log it.
    double compatibility_residual(const JointDynamics& dyn) const;
};

/// Batch of Euler-Maruyama rollouts from one start state. paths[y] holds the
/// K+1 states as rows; exit_steps[y] < K marks an early boundary hit (state
/// frozen afterwards, cost accrual stopped).
struct TrajectoryBatch {
    double t0 = 0.0;
    double epsilon = 0.0;
    int num_steps = 0;   // K; epsilon * K spans t0..t_final
    Eigen::VectorXd start;
    std::vector<Eigen::MatrixXd> paths;
    std::vector<int> exit_steps;
    Eigen::VectorXd path_values;        // filled by evaluate_batch
    Eigen::MatrixXd initial_controls;   // Y x actuated_dim, filled by evaluate_batch
    /// Log density of each rollout under the process that generated it
    /// (exploration noise), filled by evaluate_batch.
    Eigen::VectorXd sampling_log_density;
    std::vector<Eigen::MatrixXd> sampling_noise_used;   // per-agent factors
    std::vector<Eigen::MatrixXd> controls;   // per-step controls when policy-sampled
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(paths.size()); }
};

/// ū* = −R̄⁻¹ B̄(x̄)ᵀ ∇V.
Eigen::VectorXd hjb_optimal_control(const JointDynamics& dyn, const CostSpec& cost,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& value_gradient);

/// Uncontrolled rollouts x' = x + f ε + B σ √ε ξ with independent per-rollout
/// substreams of `seed`; bitwise deterministic regardless of worker count.
/// `sampling_noise` overrides the per-agent σ used while exploring (the path
/// value metric keeps the nominal σ). `stop_region` freezes a rollout once it
/// enters the boundary set.
TrajectoryBatch simulate_uncontrolled(const JointDynamics& dyn, const Eigen::VectorXd& start,
                                      double t, double t_final, int num_steps, int num_rollouts,
                                      std::uint64_t seed,
                                      const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr,
                                      Exec exec = Exec::parallel,
                                      const std::function<bool(const Eigen::VectorXd&)>& stop_region = nullptr);

/// Generalized path value of rollout y:
///   φ/λ + (ε/λ) Σ q + ½ Σ log det H + (ε/2) Σ ‖Δx_d/ε − f_d‖²_{H⁻¹}.
double generalized_path_value(const JointDynamics& dyn, const CostSpec& cost,
                              const TrajectoryBatch& batch, int rollout);

/// ũ = −(ε/λ) ∇_d q(x⁰, t0) + H(x⁰)⁻¹ (Δx_d⁰/ε − f_d(x⁰, t0)).
Eigen::VectorXd initial_control_variable(const JointDynamics& dyn, const CostSpec& cost,
                                         const TrajectoryBatch& batch, int rollout);

/// Fills path_values and initial_controls for the whole batch.
void evaluate_batch(const JointDynamics& dyn, const CostSpec& cost, TrajectoryBatch& batch,
                    Exec exec = Exec::parallel);

/// Softmax over −S̃, stabilized by shifting with the smallest path value.
Eigen::VectorXd mc_path_weights(const TrajectoryBatch& batch);

/// Weights for expectations under the optimal path law given how the batch
/// was actually sampled: softmax over −(S̃ + log sampling density). At nominal
/// noise the kinetic and log-det parts cancel, leaving the Feynman–Kac
/// exponent; with inflated exploration noise the density correction survives.
Eigen::VectorXd importance_path_weights(const TrajectoryBatch& batch);

/// ū* ≈ λ R̄⁻¹ B̄_dᵀ Σ_y w_y ũ_y with the importance weights (ordered reduction).
Eigen::VectorXd mc_joint_control(const JointDynamics& dyn, const CostSpec& cost,
                                 const TrajectoryBatch& batch);

struct DesirabilityEstimate {
    double value = 0.0;          // mean of exp(−φ/λ − (ε/λ) Σ q)
    double log_offset = 0.0;     // discretization constant K·D/2·log(2πλε), reported separately
};

DesirabilityEstimate desirability_estimate(const JointDynamics& dyn, const CostSpec& cost,
                                           const TrajectoryBatch& batch);

/// Segment plan for one control cycle: K stays fixed while ε = (t_f − t)/K
/// remains at least eps_min, afterwards ε is pinned to the control cycle and
/// K shrinks. εK always equals the remaining horizon.
struct SegmentPlan {
    int num_steps = 0;
    double epsilon = 0.0;
};
SegmentPlan plan_segments(double t, double t_final, int segments, double control_cycle,
                          double eps_min = 0.2);

/// Per-agent, per-cycle record of a receding-horizon run.
struct CycleRecord {
    double time = 0.0;
    int agent = 0;
    Eigen::VectorXd state;           // the agent's own state
    Eigen::VectorXd local_control;   // applied control (center block)
    double immediate_cost = 0.0;     // q(x̄) + ū*ᵀ R̄ ū*/2 of the subsystem
    double effective_samples = 0.0;
    double path_value_mean = 0.0;
    double path_value_std = 0.0;
    std::int64_t rollouts_used = 0;
};

struct RunLog {
    std::vector<CycleRecord> records;
    std::vector<Eigen::VectorXd> final_states;
};

/// One subsystem controller (dynamics + costs) per agent, in agent order.
struct Team {
    network::Graph graph;
    std::vector<JointDynamics> dynamics;
    std::vector<CostSpec> costs;
    std::vector<Eigen::VectorXd> initial_states;       // per agent
    std::vector<std::vector<Eigen::MatrixXd>> sampling_noise;   // per agent, per member
};

struct SamplingRunParams {
    double t_final = 25.0;
    double control_cycle = 0.2;
    int segments = 7;
    int rollouts = 400;
    double eps_min = 0.2;
    std::uint64_t seed = 0;
};

/// Receding-horizon execution of the Monte-Carlo controller: every cycle each
/// agent samples uncontrolled rollouts from its measured joint state, applies
/// its own block of the estimated joint control, and the world advances one
/// cycle under the nominal noise.
RunLog receding_horizon_run(const Team& team, const SamplingRunParams& params,
                            Exec exec = Exec::parallel);

} // namespace lsoc::pathintegral
