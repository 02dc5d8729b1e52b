#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (dense solves, brute-force enumeration, closed forms) and
// never call the code paths they check.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "lsoc/lsmdp.hpp"
#include "lsoc/network.hpp"
#include "lsoc/rng.hpp"

namespace oracles {

/// Dense direct solve of (I - A) z = b by partial-pivot LU.
inline Eigen::VectorXd dense_fixed_point(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(a.rows(), a.cols()) - a;
    return system.partialPivLu().solve(b);
}

/// Brute-force KL over paired supports.
inline double kl_reference(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0) s += p(i) * std::log(p(i) / q(i));
    return s;
}

/// Random single-agent first-exit model: `interior` interior states, one
/// absorbing exit, every interior row mixing toward the exit so the boundary
/// stays reachable.
inline lsoc::lsmdp::DiscreteModel random_agent_model(lsoc::Rng& rng, int interior,
                                                     double cost_low = 0.1, double cost_high = 2.0,
                                                     double exit_cost_high = 2.0) {
    lsoc::lsmdp::DiscreteModel m;
    const int n = interior + 1;
    m.n_states = n;
    for (int s = 0; s < interior; ++s) m.interior.push_back(s);
    m.boundary.push_back(interior);
    m.passive = Eigen::MatrixXd::Zero(n, n);
    for (int s = 0; s < interior; ++s) {
        Eigen::VectorXd row(n);
        for (int t = 0; t < n; ++t) row(t) = 0.05 + rng.uniform();
        row /= row.sum();
        m.passive.row(s) = row.transpose();
    }
    m.passive(interior, interior) = 1.0;
    m.state_cost = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < interior; ++s)
        m.state_cost(s) = cost_low + (cost_high - cost_low) * rng.uniform();
    m.exit_cost = Eigen::VectorXd::Zero(n);
    m.exit_cost(interior) = exit_cost_high * rng.uniform();
    return m;
}

/// Random joint model over a 1- or 2-member subsystem with bounded joint size.
inline lsoc::lsmdp::JointModel random_joint_model(lsoc::Rng& rng, int members, int interior_each,
                                                  double cost_low = 0.1, double cost_high = 2.0) {
    lsoc::network::Subsystem sub;
    sub.center = 0;
    for (int j = 0; j < members; ++j) sub.members.push_back(j);
    std::vector<lsoc::lsmdp::DiscreteModel> agents;
    for (int j = 0; j < members; ++j)
        agents.push_back(random_agent_model(rng, interior_each, cost_low, cost_high));
    std::vector<double> weights(static_cast<std::size_t>(members), 0.5);
    weights[0] = 1.0;
    // smooth positive joint cost depending on all member states
    auto cost = [cost_low, cost_high, interior_each](const std::vector<int>& states) {
        double q = cost_low;
        for (std::size_t j = 0; j < states.size(); ++j)
            q += (cost_high - cost_low) * 0.25 *
                 (1.0 + std::sin(1.7 * (states[j] + 1) * static_cast<double>(j + 1))) /
                 static_cast<double>(states.size());
        (void)interior_each;
        return q;
    };
    return lsoc::lsmdp::make_joint_model(sub, std::move(agents), cost, std::move(weights));
}

/// Dense materialization of the desirability system for oracle solves.
struct DenseSystem {
    Eigen::MatrixXd interior;
    Eigen::MatrixXd boundary;
    Eigen::VectorXd boundary_values;
};

inline DenseSystem densify(const lsoc::lsmdp::DesirabilitySystem& sys) {
    DenseSystem d;
    d.interior = Eigen::MatrixXd(sys.interior_coupling);
    d.boundary = Eigen::MatrixXd(sys.boundary_coupling);
    d.boundary_values = sys.boundary_values;
    return d;
}

/// Discrete-time LQG cost of executing the mean policy u_k = a_k x + b_k on
/// x' = x + u eps + noise(var = sigma^2 eps), cost sum eps u^2/2 + x_K^2/2,
/// via exact moment propagation.
inline double scalar_policy_cost(const std::vector<double>& gains, const std::vector<double>& offsets,
                                 double x0, double eps, double sigma) {
    double mean = x0;
    double var = 0.0;
    double cost = 0.0;
    for (std::size_t k = 0; k < gains.size(); ++k) {
        const double a = gains[k], b = offsets[k];
        // E[(a x + b)^2] = a^2 (m^2 + v) + 2 a b m + b^2
        cost += 0.5 * eps * (a * a * (mean * mean + var) + 2.0 * a * b * mean + b * b);
        mean = (1.0 + a * eps) * mean + b * eps;
        var = (1.0 + a * eps) * (1.0 + a * eps) * var + sigma * sigma * eps;
    }
    cost += 0.5 * (mean * mean + var);
    return cost;
}

/// Optimal discrete-time cost for the same problem (Riccati recursion).
inline double scalar_optimal_cost(int steps, double x0, double eps, double sigma) {
    double p = 1.0;   // terminal weight of x^2/2
    double s = 0.0;
    for (int k = 0; k < steps; ++k) {
        s += 0.5 * p * sigma * sigma * eps;
        p = p / (1.0 + eps * p);
    }
    return 0.5 * p * x0 * x0 + s;
}

/// Optimal discrete-time feedback gains u = -g_k x for the recursion above.
inline std::vector<double> scalar_optimal_gains(int steps, double eps) {
    std::vector<double> p(static_cast<std::size_t>(steps) + 1);
    p[static_cast<std::size_t>(steps)] = 1.0;
    for (int k = steps - 1; k >= 0; --k)
        p[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k + 1)] /
                                         (1.0 + eps * p[static_cast<std::size_t>(k + 1)]);
    std::vector<double> gains(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) gains[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k)];
    return gains;
}

} // namespace oracles
