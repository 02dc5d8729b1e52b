#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "lsoc/errors.hpp"
#include "lsoc/lsmdp.hpp"

namespace lsoc::composition {

/// Previously solved discrete problems sharing one joint model and differing
/// only in their terminal costs. Weights may be any reals as long as the
/// blended desirability stays positive where queried.
struct DiscreteComponentSet {
    const lsmdp::JointModel* model = nullptr;
    std::vector<lsmdp::Desirability> desirabilities;       // one per component
    std::vector<Eigen::VectorXd> terminal_costs;           // per component, by boundary ordinal
    std::vector<double> weights;

    int size() const { return static_cast<int>(desirabilities.size()); }
    void validate() const;   // alignment checks; throws MisalignedStateSpaces
};

/// max over boundary states of |φ_new(x̄) + log Σ_f ω_f exp(−φ_f(x̄))|.
double check_discrete_compatibility(const DiscreteComponentSet& components,
                                    const Eigen::VectorXd& new_terminal_cost);

/// Blended controller ū* = Σ_f W_f ū*_f with W_f ∝ ω_f Σ p z_f; exact for the
/// composite problem whose terminal cost satisfies the log-sum-exp identity.
/// Throws IncompatibleWeights when the blend normalizer is not positive.
lsmdp::SparseDistribution compose_discrete_controller(const DiscreteComponentSet& components,
                                                      std::int64_t joint_id);

/// Continuous-time component: an evaluable desirability Z(x̄, t) with its
/// terminal cost and temperature. Policy-search results carry no desirability
/// and cannot participate (see make_policy_component).
struct ContinuousComponent {
    std::function<double(const Eigen::VectorXd&, double)> desirability;
    std::function<double(const Eigen::VectorXd&)> terminal_cost;
    double temperature = 1.0;
};

/// Placeholder constructor for policy-search results; always throws
/// IncompatibleWeights, since composition needs desirability functions.
ContinuousComponent make_policy_component();

struct ContinuousComponentSet {
    std::vector<ContinuousComponent> components;
    std::vector<double> weights;
    double temperature = 1.0;   // λ of the composite problem

    int size() const { return static_cast<int>(components.size()); }
};

/// max over the probe states of |φ_new(x̄) + λ log Σ_f ω_f exp(−φ_f(x̄)/λ_f)|.
double check_continuous_compatibility(const ContinuousComponentSet& components,
                                      const std::function<double(const Eigen::VectorXd&)>& new_terminal_cost,
                                      const std::vector<Eigen::VectorXd>& probe_states);

struct ContinuousBlend {
    double desirability = 0.0;       // Σ ω_f Z_f(x̄, t)
    Eigen::VectorXd blend_weights;   // ω_f Z_f / Σ ω Z, a partition of unity
};

/// Throws IncompatibleWeights when the blended desirability is not positive.
ContinuousBlend compose_continuous_desirability(const ContinuousComponentSet& components,
                                                const Eigen::VectorXd& x, double t);

/// Convenience: blends component controllers with the desirability weights.
Eigen::VectorXd compose_continuous_control(
    const ContinuousComponentSet& components,
    const std::vector<std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>>& controllers,
    const Eigen::VectorXd& x, double t);

constexpr double kDefaultCompatibilityTol = 1e-6;

} // namespace lsoc::composition
