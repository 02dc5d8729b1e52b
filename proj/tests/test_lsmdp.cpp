#include <doctest.h>

#include <cmath>

#include "lsoc/lsmdp.hpp"
#include "oracles.hpp"

using namespace lsoc;
using namespace lsoc::lsmdp;

namespace {

/// Two-state chain: one interior state s0, absorbing exit s1 with
/// p(exit | s0) = exit_prob.
DiscreteModel chain_model(double exit_prob, double q, double phi) {
    DiscreteModel m;
    m.n_states = 2;
    m.interior = {0};
    m.boundary = {1};
    m.passive = Eigen::MatrixXd::Zero(2, 2);
    m.passive(0, 0) = 1.0 - exit_prob;
    m.passive(0, 1) = exit_prob;
    m.passive(1, 1) = 1.0;
    m.state_cost = Eigen::VectorXd::Zero(2);
    m.state_cost(0) = q;
    m.exit_cost = Eigen::VectorXd::Zero(2);
    m.exit_cost(1) = phi;
    return m;
}

JointModel single_agent_joint(const DiscreteModel& agent) {
    network::Subsystem sub;
    sub.center = 0;
    sub.members = {0};
    auto cost = [agent](const std::vector<int>& s) { return agent.state_cost(s[0]); };
    return make_joint_model(sub, {agent}, cost, {1.0});
}

} // namespace

TEST_SUITE("lsmdp") {

TEST_CASE("kl divergence") {
    Eigen::VectorXd p(2), q(2);
    p << 0.3, 0.7;
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0));

    q << 0.5, 0.5;
    p << 1.0, 0.0;
    CHECK(kl_divergence(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    p << 0.5, 0.5;
    q << 1.0, 0.0;
    CHECK_THROWS_AS(kl_divergence(p, q), SupportViolation);

    // nonnegativity and agreement with the brute-force sum on random pairs
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a(i) = 0.01 + rng.uniform();
            b(i) = 0.01 + rng.uniform();
        }
        a /= a.sum();
        b /= b.sum();
        CHECK(kl_divergence(a, b) >= 0.0);
        CHECK(kl_divergence(a, b) == doctest::Approx(oracles::kl_reference(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("joint immediate cost") {
    Rng rng(3);
    const JointModel m = oracles::random_joint_model(rng, 2, 3);
    const std::int64_t jid = m.interior_state(0);
    const std::vector<int> states = m.decode(jid);

    // passive controls give exactly the state cost
    std::vector<Eigen::VectorXd> passive;
    for (std::size_t j = 0; j < states.size(); ++j)
        passive.push_back(m.agents()[j].passive.row(states[j]).transpose());
    CHECK(joint_immediate_cost(m, jid, passive) ==
          doctest::Approx(m.state_cost(jid)).epsilon(1e-12));

    // the regular-cell running cost of the grid benchmark
    DiscreteModel flat = chain_model(0.5, 2.2, 0.0);
    const JointModel single = single_agent_joint(flat);
    const std::int64_t s0 = single.interior_state(0);
    CHECK(joint_immediate_cost(single, s0, {single.agents()[0].passive.row(0).transpose()}) ==
          doctest::Approx(2.2));

    // two-agent two-state toy: u_j = [1, 0] against p_j = [0.5, 0.5]
    network::Subsystem sub;
    sub.center = 0;
    sub.members = {0, 1};
    DiscreteModel toy;
    toy.n_states = 2;
    toy.interior = {0};
    toy.boundary = {1};
    toy.passive = Eigen::MatrixXd::Zero(2, 2);
    toy.passive.row(0) << 0.5, 0.5;
    toy.passive(1, 1) = 1.0;
    toy.state_cost = Eigen::VectorXd::Constant(2, 0.7);
    toy.exit_cost = Eigen::VectorXd::Zero(2);
    const JointModel pair =
        make_joint_model(sub, {toy, toy}, [](const std::vector<int>&) { return 0.7; }, {1.0, 0.5});
    Eigen::VectorXd deterministic(2);
    deterministic << 1.0, 0.0;
    CHECK(joint_immediate_cost(pair, 0, {deterministic, deterministic}) ==
          doctest::Approx(0.7 + 2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("linear system assembly") {
    // forced transition: Theta = [0], Omega = [1]
    const JointModel forced = single_agent_joint(chain_model(1.0, 0.0, 0.25));
    const DesirabilitySystem sys_forced = build_linear_system(forced);
    CHECK(Eigen::MatrixXd(sys_forced.interior_coupling)(0, 0) == doctest::Approx(0.0));
    CHECK(Eigen::MatrixXd(sys_forced.boundary_coupling)(0, 0) == doctest::Approx(1.0));
    CHECK(sys_forced.boundary_values(0) == doctest::Approx(std::exp(-0.25)));

    // hand-assembled half-exit chain with unit state cost
    const JointModel half = single_agent_joint(chain_model(0.5, 1.0, 0.0));
    const DesirabilitySystem sys_half = build_linear_system(half);
    CHECK(Eigen::MatrixXd(sys_half.interior_coupling)(0, 0) ==
          doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(Eigen::MatrixXd(sys_half.boundary_coupling)(0, 0) ==
          doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));

    // trapped interior state: boundary unreachable
    DiscreteModel trapped = chain_model(0.5, 1.0, 0.0);
    trapped.n_states = 3;
    trapped.interior = {0, 2};
    trapped.boundary = {1};
    trapped.passive = Eigen::MatrixXd::Zero(3, 3);
    trapped.passive.row(0) << 0.5, 0.5, 0.0;
    trapped.passive(1, 1) = 1.0;
    trapped.passive(2, 2) = 1.0;   // interior but absorbing
    trapped.state_cost = Eigen::VectorXd::Zero(3);
    trapped.exit_cost = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(build_linear_system(single_agent_joint(trapped)), NoBoundaryReachable);
}

TEST_CASE("centralized desirability solve") {
    // one-step exit with zero costs: z = 1
    const JointModel forced = single_agent_joint(chain_model(1.0, 0.0, 0.0));
    const Desirability z1 = solve_desirability_centralized(build_linear_system(forced));
    CHECK(z1.interior(0) == doctest::Approx(1.0).epsilon(1e-12));

    // scalar closed form z = w / (1 - theta)
    const JointModel half = single_agent_joint(chain_model(0.5, 1.0, 0.0));
    const Desirability z2 = solve_desirability_centralized(build_linear_system(half));
    const double theta = 0.5 * std::exp(-1.0);
    CHECK(z2.interior(0) == doctest::Approx(theta / (1.0 - theta)).epsilon(1e-10));

    // dense LU oracle on a random 10-state system
    Rng rng(11);
    const JointModel random_m = oracles::random_joint_model(rng, 1, 10);
    const DesirabilitySystem sys = build_linear_system(random_m);
    SolveInfo info;
    const Desirability z = solve_desirability_centralized(sys, 1e-12, 1000000, Exec::parallel, &info);
    const oracles::DenseSystem dense = oracles::densify(sys);
    const Eigen::VectorXd exact =
        oracles::dense_fixed_point(dense.interior, dense.boundary * dense.boundary_values);
    CHECK((z.interior - exact).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK(info.iterations > 1);
}

TEST_CASE("monotone geometric convergence against the dense oracle") {
    // instances with equalized interior row mass so the sup-norm contraction
    // factor equals the spectral radius exactly
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 8;
        DiscreteModel m;
        m.n_states = n + 1;
        for (int s = 0; s < n; ++s) m.interior.push_back(s);
        m.boundary.push_back(n);
        m.passive = Eigen::MatrixXd::Zero(n + 1, n + 1);
        const double exit_mass = 0.2;
        for (int s = 0; s < n; ++s) {
            Eigen::VectorXd row(n);
            for (int t = 0; t < n; ++t) row(t) = 0.05 + rng.uniform();
            row *= (1.0 - exit_mass) / row.sum();
            m.passive.row(s).head(n) = row.transpose();
            m.passive(s, n) = exit_mass;
        }
        m.passive(n, n) = 1.0;
        m.state_cost = Eigen::VectorXd::Constant(n + 1, 0.3);
        m.exit_cost = Eigen::VectorXd::Zero(n + 1);
        const JointModel jm = single_agent_joint(m);
        const DesirabilitySystem sys = build_linear_system(jm);
        const oracles::DenseSystem dense = oracles::densify(sys);
        const Eigen::VectorXd star =
            oracles::dense_fixed_point(dense.interior, dense.boundary * dense.boundary_values);
        const double radius = (1.0 - exit_mass) * std::exp(-0.3);

        Eigen::VectorXd inflow = dense.boundary * dense.boundary_values;
        Eigen::VectorXd z = inflow;
        double err = (z - star).lpNorm<Eigen::Infinity>();
        // stop before roundoff in (z - star) can perturb the per-step ratio
        for (int it = 0; it < 40 && err > 1e-6 * star.lpNorm<Eigen::Infinity>(); ++it) {
            z = dense.interior * z + inflow;
            const double next_err = (z - star).lpNorm<Eigen::Infinity>();
            CHECK(next_err <= err * (radius + 1e-9));
            err = next_err;
        }
    }
}

TEST_CASE("optimal joint control") {
    DiscreteModel m;
    m.n_states = 3;
    m.interior = {0};
    m.boundary = {1, 2};
    m.passive = Eigen::MatrixXd::Zero(3, 3);
    m.passive.row(0) << 0.0, 0.5, 0.5;
    m.passive(1, 1) = 1.0;
    m.passive(2, 2) = 1.0;
    m.state_cost = Eigen::VectorXd::Zero(3);
    m.exit_cost = Eigen::VectorXd::Zero(3);
    const JointModel jm = single_agent_joint(m);

    // z constant over the reachable set: control equals the passive row
    Desirability z;
    z.interior = Eigen::VectorXd::Ones(1);
    z.boundary = Eigen::VectorXd::Ones(2);
    SparseDistribution u = optimal_joint_control(jm, z, 0);
    REQUIRE(u.size() == 2);
    CHECK(u[0].second == doctest::Approx(0.5));
    CHECK(u[1].second == doctest::Approx(0.5));

    // z = [2, 1] over successors -> [2/3, 1/3]
    z.boundary << 2.0, 1.0;
    u = optimal_joint_control(jm, z, 0);
    CHECK(u[0].second == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(u[1].second == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // desirability concentration
    z.boundary << 1.0, 1e-300;
    u = optimal_joint_control(jm, z, 0);
    CHECK(u[0].second == doctest::Approx(1.0).epsilon(1e-10));

    // all reachable desirabilities at the clamp floor
    z.boundary << 1e-300, 1e-300;
    CHECK_THROWS_AS(optimal_joint_control(jm, z, 0), DegenerateDenominator);

    // support preservation on a random solved model
    Rng rng(5);
    const JointModel rm = oracles::random_joint_model(rng, 2, 3);
    const Desirability zr = solve_desirability_centralized(build_linear_system(rm));
    const std::int64_t jid = rm.interior_state(1);
    const SparseDistribution ur = optimal_joint_control(rm, zr, jid);
    double total = 0.0;
    std::vector<std::int64_t> support;
    rm.for_each_successor(jid, [&](std::int64_t succ, double) { support.push_back(succ); });
    REQUIRE(ur.size() == support.size());
    for (std::size_t k = 0; k < ur.size(); ++k) {
        CHECK(ur[k].first == support[k]);   // zero exactly off the passive support
        total += ur[k].second;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bellman residual") {
    const JointModel half = single_agent_joint(chain_model(0.5, 1.0, 0.0));
    const DesirabilitySystem sys = build_linear_system(half);
    Desirability z = solve_desirability_centralized(sys, 1e-13);
    CHECK(bellman_residual(half, z, half.interior_state(0)) <= 1e-12);

    // exact solve: residual small at every interior state
    Rng rng(17);
    const JointModel rm = oracles::random_joint_model(rng, 2, 4);
    const Desirability zr = solve_desirability_centralized(build_linear_system(rm), 1e-12);
    for (std::int64_t o = 0; o < rm.n_interior(); ++o)
        CHECK(bellman_residual(rm, zr, rm.interior_state(o)) <= 1e-8);

    // perturbation breaks the fixed point
    Desirability perturbed = zr;
    perturbed.interior(0) *= 1.1;
    CHECK(bellman_residual(rm, perturbed, rm.interior_state(0)) > 1e-4);
}

TEST_CASE("exponential transform consistency and control optimality") {
    // V = -log z satisfies the minimized Bellman identity; substituting the
    // optimal control into the unminimized right-hand side reproduces it, and
    // random perturbations never do better.
    Rng rng(29);
    const JointModel m = oracles::random_joint_model(rng, 2, 3);
    const Desirability z = solve_desirability_centralized(build_linear_system(m), 1e-12);

    for (std::int64_t o = 0; o < std::min<std::int64_t>(m.n_interior(), 5); ++o) {
        const std::int64_t jid = m.interior_state(o);
        const SparseDistribution u_star = optimal_joint_control(m, z, jid);

        auto rhs = [&](const SparseDistribution& u) {
            // q + KL(u || p) + E_u[V]
            Eigen::VectorXd up(static_cast<Eigen::Index>(u.size()));
            Eigen::VectorXd pp(static_cast<Eigen::Index>(u.size()));
            Eigen::Index k = 0;
            m.for_each_successor(jid, [&](std::int64_t succ, double p) {
                pp(k) = p;
                up(k) = 0.0;
                for (const auto& [s2, w] : u)
                    if (s2 == succ) up(k) = w;
                ++k;
            });
            double expectation = 0.0;
            for (const auto& [succ, w] : u) expectation += w * (-std::log(z.at(m, succ)));
            return m.state_cost(jid) + kl_divergence(up, pp) + expectation;
        };

        const double value = -std::log(z.at(m, jid));
        const double optimal_rhs = rhs(u_star);
        CHECK(std::abs(value - optimal_rhs) <= 1e-8);

        for (int trial = 0; trial < 100; ++trial) {
            SparseDistribution u = u_star;
            double total = 0.0;
            for (auto& [succ, w] : u) {
                w *= 0.05 + rng.uniform();
                total += w;
            }
            for (auto& [succ, w] : u) w /= total;
            CHECK(rhs(u) >= optimal_rhs - 1e-10);
        }
    }
}

TEST_CASE("marginal local control") {
    // product distribution: marginal recovers the center factor
    DiscreteModel a = chain_model(0.3, 1.0, 0.0);
    DiscreteModel b = chain_model(0.6, 0.5, 0.0);
    network::Subsystem sub;
    sub.center = 0;
    sub.members = {0, 1};
    const JointModel m =
        make_joint_model(sub, {a, b}, [](const std::vector<int>&) { return 1.0; }, {1.0, 0.5});

    SparseDistribution joint;
    const Eigen::VectorXd ua = a.passive.row(0).transpose();
    const Eigen::VectorXd ub = b.passive.row(0).transpose();
    for (int sa = 0; sa < 2; ++sa)
        for (int sb = 0; sb < 2; ++sb)
            joint.emplace_back(sa * 2 + sb, ua(sa) * ub(sb));
    const Eigen::VectorXd marginal = marginal_local_control(m, joint);
    CHECK(marginal(0) == doctest::Approx(ua(0)).epsilon(1e-12));
    CHECK(marginal(1) == doctest::Approx(ua(1)).epsilon(1e-12));
    CHECK(marginal.sum() == doctest::Approx(1.0).epsilon(1e-12));

    // explicit 2x2 table: center marginal is the row sums
    SparseDistribution table = {{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 0.4}};
    const Eigen::VectorXd rows = marginal_local_control(m, table);
    CHECK(rows(0) == doctest::Approx(0.3));
    CHECK(rows(1) == doctest::Approx(0.7));

    // single-agent subsystem: marginal equals the joint distribution
    const JointModel single = single_agent_joint(a);
    SparseDistribution self = {{0, 0.25}, {1, 0.75}};
    const Eigen::VectorXd same = marginal_local_control(single, self);
    CHECK(same(0) == doctest::Approx(0.25));
    CHECK(same(1) == doctest::Approx(0.75));
}

TEST_CASE("greedy rollout") {
    // deterministic chain: unique path regardless of seed; all agents exit
    const network::Graph g = network::build_graph(2, {{0, 1}});
    DiscreteModel det;
    det.n_states = 3;
    det.interior = {0, 1};
    det.boundary = {2};
    det.passive = Eigen::MatrixXd::Zero(3, 3);
    det.passive(0, 1) = 1.0;
    det.passive(1, 2) = 1.0;
    det.passive(2, 2) = 1.0;
    det.state_cost = Eigen::VectorXd::Constant(3, 1.0);
    det.exit_cost = Eigen::VectorXd::Zero(3);

    std::vector<JointModel> models;
    std::vector<Desirability> zs;
    for (int i = 0; i < 2; ++i) {
        network::Subsystem sub = network::factorial_subsystem(g, i);
        std::vector<DiscreteModel> members = {det, det};
        models.push_back(make_joint_model(
            sub, std::move(members), [](const std::vector<int>&) { return 1.0; }, {1.0, 0.5}));
        zs.push_back(solve_desirability_centralized(build_linear_system(models.back())));
    }
    const GridRollout sampled = greedy_rollout(g, models, zs, {0, 0}, 10, RolloutMode::sampled, 1);
    const GridRollout ml = greedy_rollout(g, models, zs, {0, 0}, 10, RolloutMode::max_likelihood, 99);
    CHECK(sampled.states == ml.states);
    CHECK(ml.all_exited);
    CHECK(ml.states.size() == 3);   // two transitions

    // all agents already at the boundary: zero transitions
    const GridRollout done = greedy_rollout(g, models, zs, {2, 2}, 10, RolloutMode::sampled, 1);
    CHECK(done.states.size() == 1);
    CHECK(done.all_exited);
}

} // TEST_SUITE
