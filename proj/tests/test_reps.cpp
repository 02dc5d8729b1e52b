#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lsoc/reps.hpp"
#include "oracles.hpp"

using namespace lsoc;
using namespace lsoc::reps;

namespace {

JointDynamics scalar_dynamics(double sigma) {
    AgentDynamics a;
    a.state_dim = 1;
    a.control_dim = 1;
    a.actuated_dim = 1;
    a.drift = [](Eigen::Ref<const Eigen::VectorXd>, double, Eigen::Ref<Eigen::VectorXd> out) {
        out(0) = 0.0;
    };
    a.control_matrix = Eigen::MatrixXd::Ones(1, 1);
    a.noise_factor = sigma * Eigen::MatrixXd::Ones(1, 1);
    network::Subsystem sub;
    sub.center = 0;
    sub.members = {0};
    return JointDynamics(sub, {a});
}

CostSpec lq_cost() {
    CostSpec cost;
    cost.state_cost = [](const Eigen::VectorXd&, double) { return 0.0; };
    cost.control_weight = Eigen::MatrixXd::Identity(1, 1);
    cost.terminal_cost = [](const Eigen::VectorXd& x) { return 0.5 * x(0) * x(0); };
    cost.temperature = 1.0;
    return cost;
}

} // namespace

TEST_SUITE("reps") {

TEST_CASE("sampling with a policy") {
    const JointDynamics noiseless = scalar_dynamics(0.0);

    // floored covariance, zero gains, zero dynamics noise: deterministic rollouts
    GaussianPolicy frozen = GaussianPolicy::zero(3, 1, 1, kCovarianceFloor);
    TrajectoryBatch b =
        sample_with_policy(noiseless, frozen, Eigen::VectorXd::Constant(1, 0.3), 0.0, 0.5, 4, 1);
    for (const auto& path : b.paths)
        CHECK((path.array() - 0.3).abs().maxCoeff() <= 1e-5);

    // constant offset c: x_K = x_0 + eps K c
    GaussianPolicy push = GaussianPolicy::zero(3, 1, 1, kCovarianceFloor);
    for (auto& step : push.steps) step.offset(0) = 2.0;
    b = sample_with_policy(noiseless, push, Eigen::VectorXd::Zero(1), 0.0, 0.5, 2, 1);
    CHECK(b.paths[0](3, 0) == doctest::Approx(0.5 * 3 * 2.0).epsilon(1e-6));

    // empirical control mean matches gain * x + offset within 3 standard errors
    const JointDynamics noisy = scalar_dynamics(1.0);
    GaussianPolicy linear = GaussianPolicy::zero(1, 1, 1, 0.49);
    linear.steps[0].gain(0, 0) = -0.8;
    linear.steps[0].offset(0) = 0.4;
    const int y = 10000;
    b = sample_with_policy(noisy, linear, Eigen::VectorXd::Constant(1, 1.5), 0.0, 0.1, y, 3);
    double mean = 0.0;
    for (const auto& controls : b.controls) mean += controls(0, 0);
    mean /= y;
    const double expected = -0.8 * 1.5 + 0.4;
    CHECK(std::abs(mean - expected) <= 3.0 * 0.7 / std::sqrt(static_cast<double>(y)));
}

TEST_CASE("old path density") {
    // K = 1 scalar, f = 0, B = 1, sigma = 1, eps = 1, policy N(0, 1):
    // transition N(x0, 2); at x1 = x0 the log density is -log(4 pi)/2
    const JointDynamics dyn = scalar_dynamics(1.0);
    GaussianPolicy policy = GaussianPolicy::zero(1, 1, 1, 1.0);
    TrajectoryBatch batch;
    batch.t0 = 0.0;
    batch.epsilon = 1.0;
    batch.num_steps = 1;
    batch.start = Eigen::VectorXd::Zero(1);
    batch.paths = {Eigen::MatrixXd::Zero(2, 1)};
    batch.exit_steps = {1};
    CHECK(old_path_density(dyn, policy, batch, 0) ==
          doctest::Approx(-0.5 * std::log(4.0 * M_PI)).epsilon(1e-12));

    // symmetric deviations have equal density; density decays with deviation
    auto density_at = [&](double x1) {
        TrajectoryBatch t = batch;
        t.paths[0](1, 0) = x1;
        return old_path_density(dyn, policy, t, 0);
    };
    CHECK(density_at(0.7) == doctest::Approx(density_at(-0.7)).epsilon(1e-12));
    CHECK(density_at(0.5) > density_at(1.0));
    CHECK(density_at(1.0) > density_at(2.0));
}

TEST_CASE("dual objective") {
    // single sample, psi = 0: g = kappa delta + (1+kappa)[(kappa/(1+kappa)) log q - S/(1+kappa)];
    // at kappa -> 0+ this tends to -S
    Eigen::VectorXd log_q(1), s(1);
    log_q << -1.3;
    s << 2.1;
    const Eigen::MatrixXd no_features;
    const Eigen::VectorXd no_target;
    const double delta = 0.7;
    auto g1 = [&](double kappa) {
        return dual_objective(log_q, s, kappa, Eigen::VectorXd(), delta, no_features, no_target);
    };
    CHECK(g1(1e-9) == doctest::Approx(-2.1).epsilon(1e-6));
    const double kappa = 0.8;
    const double by_hand =
        kappa * delta + (1.0 + kappa) * (kappa / (1.0 + kappa) * (-1.3) - 2.1 / (1.0 + kappa));
    CHECK(g1(kappa) == doctest::Approx(by_hand).epsilon(1e-12));

    // identical samples: the log term ignores which sample is which
    Eigen::VectorXd log_q3 = Eigen::VectorXd::Constant(3, -0.4);
    Eigen::VectorXd s3 = Eigen::VectorXd::Constant(3, 1.1);
    Eigen::VectorXd log_q1 = log_q3.head(1), s1 = s3.head(1);
    for (double k : {0.1, 0.5, 2.0})
        CHECK(dual_objective(log_q3, s3, k, Eigen::VectorXd(), 0.0, no_features, no_target) ==
              doctest::Approx(
                  dual_objective(log_q1, s1, k, Eigen::VectorXd(), 0.0, no_features, no_target)));

    // two-sample arithmetic, theta = 0, delta = 0, q = 1:
    // g(kappa) = (1+kappa) log[(1 + exp(-1/(1+kappa)))/2]
    Eigen::VectorXd zero_q = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd s2(2);
    s2 << 0.0, 1.0;
    CHECK(dual_objective(zero_q, s2, 1e-12, Eigen::VectorXd(), 0.0, no_features, no_target) ==
          doctest::Approx(std::log((1.0 + std::exp(-1.0)) / 2.0)).epsilon(1e-9));   // -0.379885
    CHECK(dual_objective(zero_q, s2, 1.0, Eigen::VectorXd(), 0.0, no_features, no_target) ==
          doctest::Approx(2.0 * std::log((1.0 + std::exp(-0.5)) / 2.0)).epsilon(1e-12));
}

TEST_CASE("dual convexity along random segments") {
    Rng rng(13);
    Eigen::VectorXd log_q(20), s(20);
    for (int i = 0; i < 20; ++i) {
        log_q(i) = rng.normal();
        s(i) = 2.0 * rng.normal();
    }
    Eigen::MatrixXd psi(20, 2);
    for (int i = 0; i < 20; ++i) psi.row(i) << rng.normal(), rng.normal();
    Eigen::VectorXd target(2);
    target << 0.1, -0.2;
    for (int trial = 0; trial < 20; ++trial) {
        const double k0 = 0.05 + 3.0 * rng.uniform(), k1 = 0.05 + 3.0 * rng.uniform();
        Eigen::VectorXd t0(2), t1(2);
        t0 << rng.normal(), rng.normal();
        t1 << rng.normal(), rng.normal();
        const double ga = dual_objective(log_q, s, k0, t0, 0.5, psi, target);
        const double gb = dual_objective(log_q, s, k1, t1, 0.5, psi, target);
        const double gmid =
            dual_objective(log_q, s, 0.5 * (k0 + k1), 0.5 * (t0 + t1), 0.5, psi, target);
        CHECK(gmid <= 0.5 * (ga + gb) + 1e-8);
    }
}

TEST_CASE("solve dual") {
    Rng rng(17);

    // grid-search oracle on a random 20-sample problem (same corrected objective)
    Eigen::VectorXd log_q(20), s(20);
    for (int i = 0; i < 20; ++i) {
        log_q(i) = 0.5 * rng.normal();
        s(i) = 1.5 * rng.normal();
    }
    const double delta = 0.4;
    const DualSolution sol = solve_dual(log_q, s, delta);
    double best_kappa = kKappaFloor, best_g = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 6000; ++i) {
        const double k = std::pow(10.0, -3.0 + 6.0 * i / 6000.0);
        const double g = dual_objective_corrected(log_q, s, k, Eigen::VectorXd(), delta,
                                                  Eigen::MatrixXd(), Eigen::VectorXd());
        if (g < best_g) {
            best_g = g;
            best_kappa = k;
        }
    }
    CHECK(std::abs(sol.kappa - best_kappa) / best_kappa <= 0.01);   // two significant figures
    CHECK(sol.gradient_norm <= 1e-6);

    // loose constraint: kappa runs to the floor
    const DualSolution free_sol = solve_dual(log_q, s, 1e9);
    CHECK(free_sol.at_kappa_floor);
    CHECK(free_sol.kappa == doctest::Approx(kKappaFloor));

    // eta reproduces the normalization identity
    const double lse = (dual_objective_corrected(log_q, s, sol.kappa, sol.theta, 0.0,
                                                 Eigen::MatrixXd(), Eigen::VectorXd())) /
                       (1.0 + sol.kappa);
    CHECK(sol.eta == doctest::Approx((1.0 + sol.kappa) * lse - 1.0 - sol.kappa).epsilon(1e-8));
}

TEST_CASE("learning weights and empirical kl") {
    // kappa -> 0, theta = 0, q = 1, S = {0, log 3}: weights {0.75, 0.25}
    Eigen::VectorXd log_q = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd s(2);
    s << 0.0, std::log(3.0);
    DualSolution dual;
    dual.kappa = 1e-15;
    const Eigen::VectorXd w = learning_weights(log_q, s, dual);
    CHECK(w(0) == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(w(1) == doctest::Approx(0.25).epsilon(1e-9));

    // equal q and S: uniform
    Eigen::VectorXd flat_q = Eigen::VectorXd::Constant(4, -0.3);
    Eigen::VectorXd flat_s = Eigen::VectorXd::Constant(4, 1.7);
    dual.kappa = 0.6;
    const Eigen::VectorXd uniform = learning_weights(flat_q, flat_s, dual);
    for (int i = 0; i < 4; ++i) CHECK(uniform(i) == doctest::Approx(0.25));
    CHECK(empirical_kl(uniform) == doctest::Approx(0.0));

    // kappa -> infinity flattens any weights
    dual.kappa = 1e12;
    const Eigen::VectorXd flattened = learning_weights(log_q, s, dual);
    CHECK(flattened(0) == doctest::Approx(0.5).epsilon(1e-9));

    // at an interior dual optimum the weights exhaust the KL budget exactly
    Rng rng(19);
    Eigen::VectorXd lq(400), sv(400);
    for (int i = 0; i < 400; ++i) {
        lq(i) = 0.5 * rng.normal();
        sv(i) = 2.0 * rng.normal();
    }
    const double delta = 0.3;
    const DualSolution sol = solve_dual(lq, sv, delta);
    REQUIRE(!sol.at_kappa_floor);
    const Eigen::VectorXd wd = learning_weights(lq, sv, sol);
    CHECK(empirical_kl(wd) == doctest::Approx(delta).epsilon(1e-5));
}

TEST_CASE("weighted mle policy fit") {
    Rng rng(23);

    // noiseless linear controls: exact recovery, covariance at the floor
    const int y = 200;
    Eigen::MatrixXd states(y, 2), controls(y, 1);
    for (int i = 0; i < y; ++i) {
        states.row(i) << rng.normal(), rng.normal();
        controls(i, 0) = 2.0 * states(i, 0) - 1.0 * states(i, 1) + 0.5;
    }
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(y, 1.0 / y);
    GaussianPolicy::Step fit = fit_policy_weighted_mle(states, controls, uniform);
    CHECK(fit.gain(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.gain(0, 1) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(fit.offset(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(fit.covariance(0, 0) <= 10 * kCovarianceFloor);

    // repeated single state: ridge keeps it solvable, gain ~ 0, offset = mean
    Eigen::MatrixXd repeated = Eigen::MatrixXd::Constant(50, 1, 0.8);
    Eigen::MatrixXd mixed(50, 1);
    for (int i = 0; i < 50; ++i) mixed(i, 0) = (i % 2 == 0) ? 1.0 : 3.0;
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(50, 1.0 / 50);
    fit = fit_policy_weighted_mle(repeated, mixed, half);
    CHECK(std::abs(fit.gain(0, 0)) <= 1e-6);
    CHECK(fit.offset(0) == doctest::Approx(2.0).epsilon(1e-9));

    // regression oracle: u = 2x + 1 + N(0, 0.25)
    const int big = 10000;
    Eigen::MatrixXd xs(big, 1), us(big, 1);
    for (int i = 0; i < big; ++i) {
        xs(i, 0) = rng.normal();
        us(i, 0) = 2.0 * xs(i, 0) + 1.0 + 0.5 * rng.normal();
    }
    fit = fit_policy_weighted_mle(xs, us, Eigen::VectorXd::Constant(big, 1.0 / big));
    const double se = 0.5 / std::sqrt(static_cast<double>(big));
    CHECK(std::abs(fit.gain(0, 0) - 2.0) <= 3.0 * se);
    CHECK(std::abs(fit.offset(0) - 1.0) <= 3.0 * se);
    CHECK(std::abs(fit.covariance(0, 0) - 0.25) <= 3.0 * 0.25 * std::sqrt(2.0 / big));

    // local maximum: random (gain, offset) perturbations never increase the
    // weighted log likelihood
    Eigen::VectorXd weights(big);
    for (int i = 0; i < big; ++i) weights(i) = rng.uniform();
    weights /= weights.sum();
    fit = fit_policy_weighted_mle(xs, us, weights);
    auto log_likelihood = [&](const GaussianPolicy::Step& step) {
        double acc = 0.0;
        for (int i = 0; i < big; ++i) {
            const double mean = step.gain(0, 0) * xs(i, 0) + step.offset(0);
            const double var = step.covariance(0, 0);
            acc += weights(i) * (-0.5 * std::log(2.0 * M_PI * var) -
                                 0.5 * (us(i, 0) - mean) * (us(i, 0) - mean) / var);
        }
        return acc;
    };
    const double at_fit = log_likelihood(fit);
    for (int trial = 0; trial < 20; ++trial) {
        GaussianPolicy::Step perturbed = fit;
        perturbed.gain(0, 0) += 0.02 * rng.normal();
        perturbed.offset(0) += 0.02 * rng.normal();
        CHECK(log_likelihood(perturbed) <= at_fit + 1e-12);
    }
}

TEST_CASE("marginal policy") {
    GaussianPolicy::Step joint;
    joint.gain = Eigen::MatrixXd::Zero(3, 2);
    joint.gain << 1, 0, 0, 1, 1, 1;
    joint.offset = Eigen::Vector3d(1.0, 2.0, 3.0);
    joint.covariance = Eigen::Matrix3d::Identity();
    joint.covariance(0, 1) = joint.covariance(1, 0) = 0.5;

    const GaussianPolicy::Step center = marginal_policy(joint, 0, 1);
    CHECK(center.offset(0) == doctest::Approx(1.0));
    CHECK(center.covariance(0, 0) == doctest::Approx(1.0));

    // correlated 2x2 block: the marginal keeps the diagonal entry
    GaussianPolicy::Step two;
    two.gain = Eigen::MatrixXd::Zero(2, 1);
    two.offset = Eigen::Vector2d(0.3, -0.4);
    two.covariance = Eigen::Matrix2d();
    two.covariance << 2.0, 1.0, 1.0, 2.0;
    const GaussianPolicy::Step first = marginal_policy(two, 0, 1);
    CHECK(first.offset(0) == doctest::Approx(0.3));
    CHECK(first.covariance(0, 0) == doctest::Approx(2.0));

    // block-diagonal covariance: the marginal block is exact
    GaussianPolicy::Step block;
    block.gain = Eigen::MatrixXd::Zero(4, 2);
    block.offset = Eigen::Vector4d(1, 2, 3, 4);
    block.covariance = Eigen::Matrix4d::Identity();
    block.covariance.block(2, 2, 2, 2) << 3.0, 0.2, 0.2, 0.5;
    const GaussianPolicy::Step tail = marginal_policy(block, 2, 2);
    CHECK(tail.covariance(0, 0) == doctest::Approx(3.0));
    CHECK(tail.covariance(0, 1) == doctest::Approx(0.2));
}

TEST_CASE("marginal sampling agrees with joint-then-discard") {
    // two-sample Kolmogorov-Smirnov at the 1% level on 1e4 draws
    GaussianPolicy::Step joint;
    joint.gain = Eigen::MatrixXd::Zero(2, 2);
    joint.offset = Eigen::Vector2d(0.5, -1.0);
    joint.covariance = Eigen::Matrix2d();
    joint.covariance << 2.0, 0.8, 0.8, 1.0;
    const GaussianPolicy::Step marginal = marginal_policy(joint, 0, 1);

    const int n = 10000;
    std::vector<double> from_joint, from_marginal;
    Rng rng(29);
    const Eigen::MatrixXd chol_joint = Eigen::LLT<Eigen::MatrixXd>(joint.covariance).matrixL();
    const double chol_marginal = std::sqrt(marginal.covariance(0, 0));
    for (int i = 0; i < n; ++i) {
        Eigen::Vector2d z(rng.normal(), rng.normal());
        from_joint.push_back((joint.offset + chol_joint * z)(0));
        from_marginal.push_back(marginal.offset(0) + chol_marginal * rng.normal());
    }
    std::sort(from_joint.begin(), from_joint.end());
    std::sort(from_marginal.begin(), from_marginal.end());
    double ks = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < from_joint.size(); ++i) {
        while (j < from_marginal.size() && from_marginal[j] <= from_joint[i]) ++j;
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - static_cast<double>(j) / n));
    }
    // critical value at alpha = 0.01 for equal sample sizes
    const double critical = 1.628 * std::sqrt(2.0 / n);
    CHECK(ks <= critical);
}

TEST_CASE("reps learning on the scalar problem") {
    const JointDynamics dyn = scalar_dynamics(1.0);
    const CostSpec cost = lq_cost();
    const int steps = 8;
    const double eps = 1.0 / steps;

    RepsParams params;
    params.delta = 5.0;
    params.rollouts_init = 600;
    params.rollouts_iter = 300;
    params.max_policy_iters = 12;
    params.policy_tol = 5e-3;
    params.policy_init_scale = 1.0 / eps;
    params.seed = 71;

    const LearnResult result =
        reps_learn(dyn, cost, Eigen::VectorXd::Constant(1, 1.0), 0.0, eps, steps, params);
    REQUIRE(!result.iterations.empty());
    // every learning step respects the KL budget (with optimizer slack)
    for (const IterationStats& s : result.iterations) CHECK(s.empirical_kl <= params.delta * 1.1);

    // mean-policy cost approaches the discrete-time optimum
    std::vector<double> gains, offsets;
    for (const auto& step : result.policy.steps) {
        gains.push_back(step.gain(0, 0));
        offsets.push_back(step.offset(0));
    }
    const double learned = oracles::scalar_policy_cost(gains, offsets, 1.0, eps, 1.0);
    const double optimal = oracles::scalar_optimal_cost(steps, 1.0, eps, 1.0);
    CHECK(learned <= optimal * 1.10);
    CHECK(learned >= optimal - 1e-9);   // cannot beat the optimum
}

TEST_CASE("stochastic start with feature matching") {
    const JointDynamics dyn = scalar_dynamics(1.0);
    const CostSpec cost = lq_cost();
    RepsParams params;
    params.delta = 5.0;
    params.rollouts_init = 400;
    params.rollouts_iter = 400;
    params.max_policy_iters = 2;
    params.policy_init_scale = 2.0;
    params.seed = 5;
    const auto sampler = [](Rng& rng) {
        return Eigen::VectorXd::Constant(1, 1.0 + 0.3 * rng.normal());
    };
    const LearnResult result =
        reps_learn(dyn, cost, Eigen::VectorXd::Constant(1, 1.0), 0.0, 0.2, 5, params, nullptr,
                   Exec::parallel, sampler);
    REQUIRE(!result.iterations.empty());
    CHECK(std::isfinite(result.iterations.back().theta_norm));
    CHECK(std::isfinite(result.iterations.back().dual_value));
}

} // TEST_SUITE
