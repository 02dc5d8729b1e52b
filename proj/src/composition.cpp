#include "lsoc/composition.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace lsoc::composition {

void DiscreteComponentSet::validate() const {
    if (!model) throw MisalignedStateSpaces("component set has no joint model");
    if (desirabilities.empty()) throw MisalignedStateSpaces("component set is empty");
    if (terminal_costs.size() != desirabilities.size() || weights.size() != desirabilities.size())
        throw MisalignedStateSpaces("components, terminal costs and weights must align");
    for (const auto& z : desirabilities) {
        if (z.interior.size() != model->n_interior() || z.boundary.size() != model->n_boundary())
            throw MisalignedStateSpaces("component desirability does not match the model partition");
    }
    for (const auto& phi : terminal_costs)
        if (phi.size() != model->n_boundary())
            throw MisalignedStateSpaces("component terminal cost does not match the boundary set");
}

double check_discrete_compatibility(const DiscreteComponentSet& components,
                                    const Eigen::VectorXd& new_terminal_cost) {
    components.validate();
    if (new_terminal_cost.size() != components.model->n_boundary())
        throw MisalignedStateSpaces("terminal cost does not match the boundary set");
    double worst = 0.0;
    for (Eigen::Index b = 0; b < new_terminal_cost.size(); ++b) {
        double mix = 0.0;
        for (int f = 0; f < components.size(); ++f)
            mix += components.weights[static_cast<std::size_t>(f)] *
                   std::exp(-components.terminal_costs[static_cast<std::size_t>(f)](b));
        if (mix <= 0.0) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(new_terminal_cost(b) + std::log(mix)));
    }
    return worst;
}

lsmdp::SparseDistribution compose_discrete_controller(const DiscreteComponentSet& components,
                                                      std::int64_t joint_id) {
    components.validate();
    const lsmdp::JointModel& m = *components.model;
    const int f_count = components.size();

    // Per-component passive-weighted desirability mass at this state.
    std::vector<double> mass(static_cast<std::size_t>(f_count), 0.0);
    std::vector<lsmdp::SparseDistribution> controls(static_cast<std::size_t>(f_count));
    for (int f = 0; f < f_count; ++f) {
        const lsmdp::Desirability& z = components.desirabilities[static_cast<std::size_t>(f)];
        m.for_each_successor(joint_id, [&](std::int64_t succ, double p) {
            mass[static_cast<std::size_t>(f)] += p * z.at(m, succ);
        });
        controls[static_cast<std::size_t>(f)] = lsmdp::optimal_joint_control(m, z, joint_id);
    }
    double normalizer = 0.0;
    for (int f = 0; f < f_count; ++f)
        normalizer += components.weights[static_cast<std::size_t>(f)] * mass[static_cast<std::size_t>(f)];
    if (!(normalizer > 0.0))
        throw IncompatibleWeights("component weights produce a non-positive blend normalizer");

    // All component rows share the passive support and successor order.
    lsmdp::SparseDistribution out = controls[0];
    for (auto& [succ, p] : out) p = 0.0;
    for (int f = 0; f < f_count; ++f) {
        const double blend =
            components.weights[static_cast<std::size_t>(f)] * mass[static_cast<std::size_t>(f)] / normalizer;
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k].second += blend * controls[static_cast<std::size_t>(f)][k].second;
    }
    return out;
}

ContinuousComponent make_policy_component() {
    throw IncompatibleWeights(
        "policy-search results carry no desirability function and cannot be composed");
}

double check_continuous_compatibility(const ContinuousComponentSet& components,
                                      const std::function<double(const Eigen::VectorXd&)>& new_terminal_cost,
                                      const std::vector<Eigen::VectorXd>& probe_states) {
    if (components.components.size() != components.weights.size())
        throw MisalignedStateSpaces("components and weights must align");
    double worst = 0.0;
    for (const Eigen::VectorXd& x : probe_states) {
        double mix = 0.0;
        for (int f = 0; f < components.size(); ++f) {
            const ContinuousComponent& c = components.components[static_cast<std::size_t>(f)];
            mix += components.weights[static_cast<std::size_t>(f)] *
                   std::exp(-c.terminal_cost(x) / c.temperature);
        }
        if (mix <= 0.0) return std::numeric_limits<double>::infinity();
        worst = std::max(worst,
                         std::abs(new_terminal_cost(x) + components.temperature * std::log(mix)));
    }
    return worst;
}

ContinuousBlend compose_continuous_desirability(const ContinuousComponentSet& components,
                                                const Eigen::VectorXd& x, double t) {
    if (components.components.size() != components.weights.size())
        throw MisalignedStateSpaces("components and weights must align");
    ContinuousBlend blend;
    blend.blend_weights.resize(components.size());
    for (int f = 0; f < components.size(); ++f) {
        const double zf =
            components.components[static_cast<std::size_t>(f)].desirability(x, t);
        blend.blend_weights(f) = components.weights[static_cast<std::size_t>(f)] * zf;
        blend.desirability += blend.blend_weights(f);
    }
    if (!(blend.desirability > 0.0))
        throw IncompatibleWeights("blended desirability is not positive at the queried state");
    blend.blend_weights /= blend.desirability;
    return blend;
}

Eigen::VectorXd compose_continuous_control(
    const ContinuousComponentSet& components,
    const std::vector<std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>>& controllers,
    const Eigen::VectorXd& x, double t) {
    if (controllers.size() != static_cast<std::size_t>(components.size()))
        throw MisalignedStateSpaces("one controller per component expected");
    const ContinuousBlend blend = compose_continuous_desirability(components, x, t);
    Eigen::VectorXd u;
    for (int f = 0; f < components.size(); ++f) {
        const Eigen::VectorXd uf = controllers[static_cast<std::size_t>(f)](x, t);
        if (f == 0)
            u = blend.blend_weights(f) * uf;
        else
            u += blend.blend_weights(f) * uf;
    }
    return u;
}

} // namespace lsoc::composition
