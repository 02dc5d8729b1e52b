#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lsoc/errors.hpp"
#include "lsoc/pathintegral.hpp"

namespace lsoc::reps {

using pathintegral::AgentDynamics;
using pathintegral::JointDynamics;
using pathintegral::CostSpec;
using pathintegral::TrajectoryBatch;

/// Time-indexed linear-Gaussian joint policy: u ~ N(gain·x + offset, covariance)
/// at every segment k. Covariances stay positive definite (eigenvalues are
/// floored at 1e-12 when fitted).
struct GaussianPolicy {
    struct Step {
        Eigen::MatrixXd gain;         // control_dim x state_dim
        Eigen::VectorXd offset;       // control_dim
        Eigen::MatrixXd covariance;   // control_dim x control_dim
    };
    std::vector<Step> steps;

    int num_steps() const { return static_cast<int>(steps.size()); }

    static GaussianPolicy zero(int num_steps, int control_dim, int state_dim, double covariance_scale);
};

constexpr double kCovarianceFloor = 1e-12;
constexpr double kKappaFloor = 1e-6;

/// Rollouts under the policy: controls are drawn from the per-step Gaussians,
/// states advance by controlled Euler-Maruyama with the (optionally
/// exploration-scaled) dynamics noise. Per-step controls are retained.
TrajectoryBatch sample_with_policy(const JointDynamics& dyn, const GaussianPolicy& policy,
                                   const Eigen::VectorXd& start, double t, double epsilon,
                                   int num_rollouts, std::uint64_t seed,
                                   const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr,
                                   Exec exec = Exec::parallel);

/// Stochastic-start variant: each rollout draws its own start from the
/// sampler (deterministically per rollout substream).
TrajectoryBatch sample_with_policy(const JointDynamics& dyn, const GaussianPolicy& policy,
                                   const std::function<Eigen::VectorXd(Rng&)>& start_sampler,
                                   int state_dim, double t, double epsilon, int num_rollouts,
                                   std::uint64_t seed,
                                   const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr,
                                   Exec exec = Exec::parallel);

/// Linear plus quadratic monomials of a start state, the feature vector used
/// by the stochastic-start constraint.
Eigen::VectorXd start_features(const Eigen::VectorXd& x);

/// Log density of a rollout under the policy-induced path distribution: the
/// control integrates out analytically, each actuated step is Gaussian with
/// covariance ε H + ε² B̄_d Σ̂ B̄_dᵀ. A deterministic start contributes log μ = 0.
double old_path_density(const JointDynamics& dyn, const GaussianPolicy& policy,
                        const TrajectoryBatch& batch, int rollout,
                        const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr);

/// Whole-batch log densities; hoists the per-step covariance factorizations
/// when the control matrices are constant.
Eigen::VectorXd old_path_density_batch(const JointDynamics& dyn, const GaussianPolicy& policy,
                                       const TrajectoryBatch& batch,
                                       const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr,
                                       Exec exec = Exec::parallel);

/// Sampled dual objective as stated,
///   g = κδ + θᵀψ̂⁰ + (1+κ) log[(1/Y) Σ_y q̃^{κ/(1+κ)} exp(−(S̃+ψᵀθ)/(1+κ))],
/// evaluated in the log domain. `features` may be empty (θ ignored).
double dual_objective(const Eigen::VectorXd& log_old_density, const Eigen::VectorXd& path_values,
                      double kappa, const Eigen::VectorXd& theta, double delta,
                      const Eigen::MatrixXd& features, const Eigen::VectorXd& feature_target);

struct DualSolution {
    double kappa = 0.0;
    Eigen::VectorXd theta;
    double eta = 0.0;
    double objective = 0.0;
    double gradient_norm = 0.0;
    bool at_kappa_floor = false;
};

/// Minimizes the sampled dual over κ > 0 (reparameterized as exp ζ) and θ by
/// quasi-Newton descent. Because the trajectories are drawn from the old path
/// distribution, the sample average carries the density correction
/// q̃^{−1/(1+κ)}; at an interior optimum the realized importance weights then
/// satisfy the KL budget exactly. η follows from the normalization identity.
DualSolution solve_dual(const Eigen::VectorXd& log_old_density, const Eigen::VectorXd& path_values,
                        double delta, const Eigen::MatrixXd& features = Eigen::MatrixXd(),
                        const Eigen::VectorXd& feature_target = Eigen::VectorXd());

/// Importance-corrected dual actually minimized by solve_dual (exposed for the
/// grid-search oracle in tests).
double dual_objective_corrected(const Eigen::VectorXd& log_old_density,
                                const Eigen::VectorXd& path_values, double kappa,
                                const Eigen::VectorXd& theta, double delta,
                                const Eigen::MatrixXd& features,
                                const Eigen::VectorXd& feature_target);

/// Normalized likelihood weights d_y ∝ q̃^{−1/(1+κ)} exp(−(S̃+ψᵀθ)/(1+κ)),
/// computed in the log domain.
Eigen::VectorXd learning_weights(const Eigen::VectorXd& log_old_density,
                                 const Eigen::VectorXd& path_values, const DualSolution& dual,
                                 const Eigen::MatrixXd& features = Eigen::MatrixXd());

/// Sample KL(p̃ ‖ q̃) of normalized importance weights: log Y + Σ w log w.
double empirical_kl(const Eigen::VectorXd& weights);

/// Per-step target controls recovered from consecutive states,
///   ū*_k = (B̄_dᵀB̄_d)⁻¹ B̄_dᵀ (Δx_d − ε f̄_d)/ε.
Eigen::MatrixXd recover_step_controls(const JointDynamics& dyn, const TrajectoryBatch& batch,
                                      int step);

/// Weighted maximum-likelihood fit of one policy step: (gain, offset) by
/// weighted least squares of the targets on the states, covariance from the
/// weighted residuals (eigenvalue-floored). Falls back to a trace-scaled ridge
/// when the design is rank deficient, leaving the offset unpenalized.
GaussianPolicy::Step fit_policy_weighted_mle(const Eigen::MatrixXd& states,
                                             const Eigen::MatrixXd& target_controls,
                                             const Eigen::VectorXd& weights);

/// Gaussian marginal of the center agent's control block.
GaussianPolicy::Step marginal_policy(const GaussianPolicy::Step& step, int offset, int dim);

struct RepsParams {
    double delta = 25.0;
    int rollouts_init = 400;
    int rollouts_iter = 150;
    int max_policy_iters = 20;
    double policy_tol = 1e-3;
    double policy_init_scale = 1.0;
    std::uint64_t seed = 0;
};

struct IterationStats {
    int iteration = 0;
    double kappa = 0.0;
    double dual_value = 0.0;
    double empirical_kl = 0.0;
    double policy_change = 0.0;
    double theta_norm = 0.0;
    int rollouts = 0;
    double gain_norm = 0.0;
    double offset_norm = 0.0;
    double covariance_norm = 0.0;
};

struct LearnResult {
    GaussianPolicy policy;
    std::vector<IterationStats> iterations;
    std::int64_t rollouts_used = 0;
};

/// Policy search for one decision point: alternate (sample with current
/// policy → solve dual → weights → per-step weighted MLE) until the policy
/// parameters settle or the iteration cap hits. Deterministic start state, so
/// the feature constraint is dropped (θ = 0); a stochastic start with
/// linear+quadratic features is available through `start_sampler`.
LearnResult reps_learn(const JointDynamics& dyn, const CostSpec& cost, const Eigen::VectorXd& start,
                       double t, double epsilon, int num_steps, const RepsParams& params,
                       const std::vector<Eigen::MatrixXd>* sampling_noise = nullptr,
                       Exec exec = Exec::parallel,
                       const std::function<Eigen::VectorXd(Rng&)>& start_sampler = nullptr,
                       const GaussianPolicy* initial_policy = nullptr);

struct RepsRunParams {
    double t_final = 25.0;
    double control_cycle = 0.2;
    int segments = 7;
    double eps_min = 0.2;
    /// Execute the marginal's mean instead of sampling it (the policy
    /// covariance is posterior spread, not part of the optimal law).
    bool execute_mean = false;
    RepsParams learn;
};

struct RepsRunLog {
    pathintegral::RunLog log;
    std::vector<IterationStats> iterations;   // all cycles and agents, in order
};

/// Receding-horizon execution of the REPS controller (fresh zero policy each
/// cycle, per-cycle learning loop, center agent's control sampled from the
/// marginal of the converged step-0 policy).
RepsRunLog reps_run(const pathintegral::Team& team, const RepsRunParams& params,
                    Exec exec = Exec::parallel);

} // namespace lsoc::reps
