#include "lsoc/reps.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace lsoc::reps {

GaussianPolicy GaussianPolicy::zero(int num_steps, int control_dim, int state_dim,
                                    double covariance_scale) {
    GaussianPolicy p;
    p.steps.assign(static_cast<std::size_t>(num_steps),
                   Step{Eigen::MatrixXd::Zero(control_dim, state_dim),
                        Eigen::VectorXd::Zero(control_dim),
                        covariance_scale * Eigen::MatrixXd::Identity(control_dim, control_dim)});
    return p;
}

namespace {

TrajectoryBatch sample_with_policy_impl(const JointDynamics& dyn, const GaussianPolicy& policy,
                                        const Eigen::VectorXd& start,
                                        const std::function<Eigen::VectorXd(Rng&)>& start_sampler,
                                        double t, double epsilon, int num_rollouts,
                                        std::uint64_t seed,
                                        const std::vector<Eigen::MatrixXd>* sampling_noise,
                                        Exec exec) {
    const int num_steps = policy.num_steps();
    if (num_steps < 1 || num_rollouts < 1)
        throw ConfigError("need at least one policy step and one rollout");
    if (start.size() != dyn.state_dim()) throw ConfigError("start state dimension mismatch");

    // Per-step covariance factors, shared across rollouts.
    std::vector<Eigen::MatrixXd> chol(static_cast<std::size_t>(num_steps));
    for (int k = 0; k < num_steps; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(policy.steps[static_cast<std::size_t>(k)].covariance);
        if (llt.info() != Eigen::Success)
            throw SingularCovariance("policy covariance at step " + std::to_string(k) +
                                     " is not positive definite");
        chol[static_cast<std::size_t>(k)] = llt.matrixL();
    }

    TrajectoryBatch batch;
    batch.t0 = t;
    batch.epsilon = epsilon;
    batch.num_steps = num_steps;
    batch.start = start;
    batch.seed = seed;
    batch.paths.assign(static_cast<std::size_t>(num_rollouts),
                       Eigen::MatrixXd(num_steps + 1, dyn.state_dim()));
    batch.exit_steps.assign(static_cast<std::size_t>(num_rollouts), num_steps);
    batch.controls.assign(static_cast<std::size_t>(num_rollouts),
                          Eigen::MatrixXd(num_steps, dyn.control_dim()));

    const double sqrt_eps = std::sqrt(epsilon);
    const std::size_t members = dyn.agents().size();

    parallel_for(exec, num_rollouts, [&](std::int64_t y) {
        Rng rng(substream({seed, static_cast<std::uint64_t>(y)}));
        Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(y)];
        Eigen::MatrixXd& controls = batch.controls[static_cast<std::size_t>(y)];
        Eigen::VectorXd x = start_sampler ? start_sampler(rng) : start;
        Eigen::VectorXd f(dyn.state_dim());
        Eigen::VectorXd z(dyn.control_dim()), xi;
        path.row(0) = x.transpose();
        for (int k = 0; k < num_steps; ++k) {
            const GaussianPolicy::Step& step = policy.steps[static_cast<std::size_t>(k)];
            for (int c = 0; c < dyn.control_dim(); ++c) z(c) = rng.normal();
            const Eigen::VectorXd u = step.gain * x + step.offset + chol[static_cast<std::size_t>(k)] * z;
            controls.row(k) = u.transpose();

            const double tk = t + k * epsilon;
            dyn.drift(x, tk, f);
            Eigen::VectorXd next = x + epsilon * f;
            for (std::size_t j = 0; j < members; ++j) {
                const AgentDynamics& a = dyn.agents()[j];
                xi.resize(a.control_dim);
                for (int c = 0; c < a.control_dim; ++c) xi(c) = rng.normal();
                const Eigen::MatrixXd b =
                    a.control_matrix_at(x.segment(dyn.state_offset(static_cast<int>(j)), a.state_dim));
                const Eigen::MatrixXd& sigma =
                    sampling_noise ? (*sampling_noise)[j] : a.noise_factor;
                next.segment(dyn.state_offset(static_cast<int>(j)) + a.state_dim - a.actuated_dim,
                             a.actuated_dim) +=
                    b.bottomRows(a.actuated_dim) *
                    (epsilon * u.segment(dyn.control_offset(static_cast<int>(j)), a.control_dim) +
                     sqrt_eps * (sigma * xi));
            }
            if (!next.allFinite())
                throw NonFiniteState("policy rollout " + std::to_string(y) +
                                     " diverged at segment " + std::to_string(k));
            x = next;
            path.row(k + 1) = x.transpose();
        }
    });
    if (start_sampler && num_rollouts > 0) batch.start = batch.paths[0].row(0).transpose();
    return batch;
}

} // namespace

TrajectoryBatch sample_with_policy(const JointDynamics& dyn, const GaussianPolicy& policy,
                                   const Eigen::VectorXd& start, double t, double epsilon,
                                   int num_rollouts, std::uint64_t seed,
                                   const std::vector<Eigen::MatrixXd>* sampling_noise, Exec exec) {
    return sample_with_policy_impl(dyn, policy, start, nullptr, t, epsilon, num_rollouts, seed,
                                   sampling_noise, exec);
}

TrajectoryBatch sample_with_policy(const JointDynamics& dyn, const GaussianPolicy& policy,
                                   const std::function<Eigen::VectorXd(Rng&)>& start_sampler,
                                   int state_dim, double t, double epsilon, int num_rollouts,
                                   std::uint64_t seed,
                                   const std::vector<Eigen::MatrixXd>* sampling_noise, Exec exec) {
    if (!start_sampler) throw ConfigError("start sampler must be callable");
    return sample_with_policy_impl(dyn, policy, Eigen::VectorXd::Zero(state_dim), start_sampler, t,
                                   epsilon, num_rollouts, seed, sampling_noise, exec);
}

Eigen::VectorXd start_features(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd f(n + n * (n + 1) / 2);
    f.head(n) = x;
    Eigen::Index pos = n;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) f(pos++) = x(i) * x(j);
    return f;
}

namespace {

Eigen::MatrixXd joint_noise_factor(const JointDynamics& dyn,
                                   const std::vector<Eigen::MatrixXd>* sampling_noise) {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dyn.control_dim(), dyn.control_dim());
    for (std::size_t j = 0; j < dyn.agents().size(); ++j) {
        const int off = dyn.control_offset(static_cast<int>(j));
        const int p = dyn.agents()[j].control_dim;
        sigma.block(off, off, p, p) =
            sampling_noise ? (*sampling_noise)[j] : dyn.agents()[j].noise_factor;
    }
    return sigma;
}

struct TransitionModel {
    Eigen::MatrixXd bd;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
};

TransitionModel transition_model(const JointDynamics& dyn, const Eigen::MatrixXd& sigma,
                                 const GaussianPolicy::Step& step, const Eigen::VectorXd& x,
                                 double eps, int step_index) {
    TransitionModel m;
    m.bd = dyn.actuated_control_matrix(x);
    const Eigen::MatrixXd bs = m.bd * sigma;
    const Eigen::MatrixXd covariance =
        eps * (bs * bs.transpose()) + eps * eps * m.bd * step.covariance * m.bd.transpose();
    m.llt.compute(covariance);
    if (m.llt.info() != Eigen::Success)
        throw SingularCovariance("transition covariance at step " + std::to_string(step_index) +
                                 " is not positive definite");
    m.log_det = 2.0 * Eigen::MatrixXd(m.llt.matrixL()).diagonal().array().log().sum();
    return m;
}

double step_log_density(const JointDynamics& dyn, const TransitionModel& m,
                        const GaussianPolicy::Step& step, const Eigen::MatrixXd& path, int k,
                        double t0, double eps, Eigen::VectorXd& fd) {
    const Eigen::VectorXd xk = path.row(k).transpose();
    dyn.actuated_drift(xk, t0 + k * eps, fd);
    const Eigen::VectorXd mean =
        dyn.actuated_part(xk) + eps * fd + eps * (m.bd * (step.gain * xk + step.offset));
    const Eigen::VectorXd diff = dyn.actuated_part(path.row(k + 1).transpose()) - mean;
    return -0.5 * (dyn.actuated_dim() * std::log(2.0 * M_PI) + m.log_det +
                   diff.dot(m.llt.solve(diff)));
}

} // namespace

double old_path_density(const JointDynamics& dyn, const GaussianPolicy& policy,
                        const TrajectoryBatch& batch, int rollout,
                        const std::vector<Eigen::MatrixXd>* sampling_noise) {
    const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(rollout)];
    const double eps = batch.epsilon;
    const int steps = batch.num_steps;
    if (policy.num_steps() != steps)
        throw ConfigError("policy and batch disagree on the number of segments");
    const Eigen::MatrixXd sigma = joint_noise_factor(dyn, sampling_noise);

    double log_density = 0.0;   // deterministic start: log μ = 0
    Eigen::VectorXd fd(dyn.actuated_dim());
    for (int k = 0; k < steps; ++k) {
        const GaussianPolicy::Step& step = policy.steps[static_cast<std::size_t>(k)];
        const TransitionModel m =
            transition_model(dyn, sigma, step, path.row(k).transpose(), eps, k);
        log_density += step_log_density(dyn, m, step, path, k, batch.t0, eps, fd);
    }
    return log_density;
}

Eigen::VectorXd old_path_density_batch(const JointDynamics& dyn, const GaussianPolicy& policy,
                                       const TrajectoryBatch& batch,
                                       const std::vector<Eigen::MatrixXd>* sampling_noise,
                                       Exec exec) {
    const int y = batch.size();
    Eigen::VectorXd out(y);
    if (policy.num_steps() != batch.num_steps)
        throw ConfigError("policy and batch disagree on the number of segments");
    const Eigen::MatrixXd sigma = joint_noise_factor(dyn, sampling_noise);
    if (!dyn.constant_control_matrices()) {
        parallel_for(exec, y, [&](std::int64_t i) {
            out(i) = old_path_density(dyn, policy, batch, static_cast<int>(i), sampling_noise);
        });
        return out;
    }
    // constant control matrices: one factorization per step, shared by all rollouts
    std::vector<TransitionModel> models;
    models.reserve(static_cast<std::size_t>(batch.num_steps));
    for (int k = 0; k < batch.num_steps; ++k)
        models.push_back(transition_model(dyn, sigma, policy.steps[static_cast<std::size_t>(k)],
                                          batch.start, batch.epsilon, k));
    parallel_for(exec, y, [&](std::int64_t i) {
        const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(i)];
        Eigen::VectorXd fd(dyn.actuated_dim());
        double acc = 0.0;
        for (int k = 0; k < batch.num_steps; ++k)
            acc += step_log_density(dyn, models[static_cast<std::size_t>(k)],
                                    policy.steps[static_cast<std::size_t>(k)], path, k, batch.t0,
                                    batch.epsilon, fd);
        out(i) = acc;
    });
    return out;
}

namespace {

/// Log-domain evaluation of g = κδ + θᵀψ̂ + (1+κ)·LSE-mean of the per-sample
/// exponents. `density_exponent` is the weight on log q̃ (κ for the dual as
/// printed, −1 for the importance-corrected dual used by the optimizer; both
/// are divided by (1+κ)).
double dual_core(const Eigen::VectorXd& log_q, const Eigen::VectorXd& s, double kappa,
                 const Eigen::VectorXd& theta, double delta, const Eigen::MatrixXd& features,
                 const Eigen::VectorXd& feature_target, double density_exponent,
                 Eigen::VectorXd* softmax = nullptr) {
    const Eigen::Index y = s.size();
    Eigen::VectorXd shifted = s;
    if (features.size() > 0 && theta.size() > 0) shifted += features * theta;
    Eigen::VectorXd exponents =
        (density_exponent * log_q.array() - shifted.array()) / (1.0 + kappa);
    const double peak = exponents.maxCoeff();
    const Eigen::VectorXd scaled = (exponents.array() - peak).exp();
    const double lse = peak + std::log(scaled.sum() / static_cast<double>(y));
    if (softmax) *softmax = scaled / scaled.sum();
    double g = kappa * delta + (1.0 + kappa) * lse;
    if (features.size() > 0 && theta.size() > 0) g += theta.dot(feature_target);
    return g;
}

} // namespace

double dual_objective(const Eigen::VectorXd& log_old_density, const Eigen::VectorXd& path_values,
                      double kappa, const Eigen::VectorXd& theta, double delta,
                      const Eigen::MatrixXd& features, const Eigen::VectorXd& feature_target) {
    return dual_core(log_old_density, path_values, kappa, theta, delta, features, feature_target,
                     kappa);
}

double dual_objective_corrected(const Eigen::VectorXd& log_old_density,
                                const Eigen::VectorXd& path_values, double kappa,
                                const Eigen::VectorXd& theta, double delta,
                                const Eigen::MatrixXd& features,
                                const Eigen::VectorXd& feature_target) {
    return dual_core(log_old_density, path_values, kappa, theta, delta, features, feature_target,
                     -1.0);
}

DualSolution solve_dual(const Eigen::VectorXd& log_old_density, const Eigen::VectorXd& path_values,
                        double delta, const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& feature_target) {
    if (path_values.size() < 1) throw ConfigError("solve_dual needs at least one sample");
    const bool with_theta = features.size() > 0;
    const Eigen::Index dim_theta = with_theta ? features.cols() : 0;

    // variables: zeta = log kappa, then theta
    const double zeta_min = std::log(kKappaFloor);
    const double zeta_max = std::log(1e8);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(1 + dim_theta);   // kappa starts at 1

    auto eval = [&](const Eigen::VectorXd& vars, Eigen::VectorXd& grad) {
        const double kappa = std::exp(vars(0));
        const Eigen::VectorXd theta = vars.tail(dim_theta);
        Eigen::VectorXd softmax;
        const double g = dual_core(log_old_density, path_values, kappa, theta, delta, features,
                                   feature_target, -1.0, &softmax);
        // dg/dkappa = delta + LSE-mean - Σ d̄ b (see header note)
        Eigen::VectorXd shifted = path_values;
        if (with_theta) shifted += features * theta;
        const Eigen::VectorXd b = (-(log_old_density + shifted).array()) / (1.0 + kappa);
        const double lse = (g - kappa * delta - (with_theta ? theta.dot(feature_target) : 0.0)) /
                           (1.0 + kappa);
        grad.resize(vars.size());
        grad(0) = (delta + lse - softmax.dot(b)) * kappa;   // chain rule through zeta
        if (with_theta)
            grad.tail(dim_theta) = feature_target - features.transpose() * softmax;
        return g;
    };

    Eigen::VectorXd grad(v.size()), grad_new(v.size());
    double g = eval(v, grad);
    Eigen::MatrixXd hessian_inv = Eigen::MatrixXd::Identity(v.size(), v.size());
    const int max_iters = 300;
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        if (!std::isfinite(g) || !grad.allFinite())
            throw OptimizerDiverged("dual optimization produced non-finite values");
        const bool floored = v(0) <= zeta_min + 1e-12 && grad(0) > 0.0;
        Eigen::VectorXd effective = grad;
        if (floored) effective(0) = 0.0;
        if (effective.norm() <= 1e-9) break;

        Eigen::VectorXd direction = -hessian_inv * effective;
        if (direction.dot(effective) > 0.0) direction = -effective;   // safeguard
        double step = 1.0;
        Eigen::VectorXd v_new = v;
        double g_new = g;
        bool improved = false;
        for (int ls = 0; ls < 60; ++ls) {
            v_new = v + step * direction;
            v_new(0) = std::clamp(v_new(0), zeta_min, zeta_max);
            g_new = eval(v_new, grad_new);
            if (std::isfinite(g_new) && g_new <= g + 1e-4 * step * direction.dot(effective)) {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;   // line search stalled at the optimum's noise floor
        const Eigen::VectorXd sv = v_new - v;
        const Eigen::VectorXd yv = grad_new - grad;
        const double sy = sv.dot(yv);
        if (sy > 1e-12) {   // BFGS update
            const Eigen::MatrixXd syt = sv * yv.transpose();
            const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(v.size(), v.size());
            hessian_inv = (identity - syt / sy) * hessian_inv * (identity - syt.transpose() / sy) +
                          sv * sv.transpose() / sy;
        }
        v = v_new;
        g = g_new;
        grad = grad_new;
    }

    DualSolution sol;
    sol.kappa = std::exp(v(0));
    sol.theta = v.tail(dim_theta);
    sol.objective = g;
    sol.at_kappa_floor = v(0) <= zeta_min + 1e-12;
    Eigen::VectorXd final_grad(v.size());
    eval(v, final_grad);
    if (sol.at_kappa_floor && final_grad(0) > 0.0) final_grad(0) = 0.0;
    sol.gradient_norm = final_grad.norm();
    // η from the normalization identity, evaluated with the corrected sample mean.
    const double lse = (dual_objective_corrected(log_old_density, path_values, sol.kappa, sol.theta,
                                                 0.0, features, feature_target) -
                        (with_theta ? sol.theta.dot(feature_target) : 0.0)) /
                       (1.0 + sol.kappa);
    sol.eta = (1.0 + sol.kappa) * lse - 1.0 - sol.kappa;
    return sol;
}

Eigen::VectorXd learning_weights(const Eigen::VectorXd& log_old_density,
                                 const Eigen::VectorXd& path_values, const DualSolution& dual,
                                 const Eigen::MatrixXd& features) {
    Eigen::VectorXd shifted = path_values;
    if (features.size() > 0 && dual.theta.size() > 0) shifted += features * dual.theta;
    Eigen::VectorXd exponents = -(log_old_density + shifted) / (1.0 + dual.kappa);
    const double peak = exponents.maxCoeff();
    Eigen::VectorXd w(exponents.size());
    // exact zeros below the representable range keep the weighted fits out of
    // denormal arithmetic
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double e = exponents(i) - peak;
        w(i) = e < -700.0 ? 0.0 : std::exp(e);
    }
    return w / w.sum();
}

double empirical_kl(const Eigen::VectorXd& weights) {
    double kl = std::log(static_cast<double>(weights.size()));
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        if (weights(i) > 0.0) kl += weights(i) * std::log(weights(i));
    return kl;
}

Eigen::MatrixXd recover_step_controls(const JointDynamics& dyn, const TrajectoryBatch& batch,
                                      int step) {
    const int y = batch.size();
    Eigen::MatrixXd controls(y, dyn.control_dim());
    Eigen::VectorXd fd(dyn.actuated_dim());
    const bool constant = dyn.constant_control_matrices();
    Eigen::MatrixXd bd;
    Eigen::LLT<Eigen::MatrixXd> llt;
    auto factor_at = [&](const Eigen::VectorXd& x) {
        bd = dyn.actuated_control_matrix(x);
        llt.compute(bd.transpose() * bd);
        if (llt.info() != Eigen::Success)
            throw DegenerateDesign("actuation matrix has dependent columns");
    };
    if (constant) factor_at(batch.start);
    for (int i = 0; i < y; ++i) {
        const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(i)];
        const Eigen::VectorXd xk = path.row(step).transpose();
        if (!constant) factor_at(xk);
        dyn.actuated_drift(xk, batch.t0 + step * batch.epsilon, fd);
        const Eigen::VectorXd rhs =
            (dyn.actuated_part(path.row(step + 1).transpose()) - dyn.actuated_part(xk)) /
                batch.epsilon -
            fd;
        controls.row(i) = llt.solve(bd.transpose() * rhs).transpose();
    }
    return controls;
}

GaussianPolicy::Step fit_policy_weighted_mle(const Eigen::MatrixXd& states,
                                             const Eigen::MatrixXd& target_controls,
                                             const Eigen::VectorXd& weights) {
    const Eigen::Index y = states.rows();
    const Eigen::Index sdim = states.cols();
    const Eigen::Index cdim = target_controls.cols();
    if (target_controls.rows() != y || weights.size() != y)
        throw ConfigError("fit_policy_weighted_mle: sample counts disagree");

    const Eigen::VectorXd mean_x = states.transpose() * weights;
    const Eigen::VectorXd mean_u = target_controls.transpose() * weights;
    const Eigen::MatrixXd xc = states.rowwise() - mean_x.transpose();
    const Eigen::MatrixXd uc = target_controls.rowwise() - mean_u.transpose();
    const Eigen::MatrixXd wxc = weights.asDiagonal() * xc;
    Eigen::MatrixXd xtwx = xc.transpose() * wxc;
    const Eigen::MatrixXd xtwu = wxc.transpose() * uc;

    Eigen::MatrixXd gain(cdim, sdim);
    Eigen::LLT<Eigen::MatrixXd> llt(xtwx);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        // reject near-singular designs, measured against the state scale so a
        // uniformly tiny centered design counts as degenerate
        const double state_scale =
            (weights.asDiagonal() * states).cwiseProduct(states).sum() + 1.0;
        const Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal();
        ok = d.minCoeff() > 1e-7 * std::sqrt(state_scale);
    }
    // a gain over sdim regressors is unidentifiable from fewer effective
    // samples than parameters; shrink it toward the plain weighted mean then
    const double ess = 1.0 / weights.squaredNorm();
    const double needed = 2.0 * static_cast<double>(sdim);
    if (ok && ess < needed) ok = false;
    if (!ok) {
        const double severity =
            ess < needed ? std::max(1e-8, (needed - ess) / needed) : 1e-8;
        const double ridge =
            severity * std::max(xtwx.trace() / static_cast<double>(sdim), 1e-8);
        xtwx += ridge * Eigen::MatrixXd::Identity(sdim, sdim);
        llt.compute(xtwx);
        if (llt.info() != Eigen::Success)
            throw DegenerateDesign("weighted design is degenerate even with a ridge");
    }
    gain = llt.solve(xtwu).transpose();
    if (!gain.allFinite()) throw DegenerateDesign("policy gain fit produced non-finite values");

    GaussianPolicy::Step step;
    step.gain = gain;
    step.offset = mean_u - gain * mean_x;

    const Eigen::MatrixXd residuals = uc - xc * gain.transpose();
    Eigen::MatrixXd cov = residuals.transpose() * (weights.asDiagonal() * residuals);
    cov = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(kCovarianceFloor);
    step.covariance = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    return step;
}

GaussianPolicy::Step marginal_policy(const GaussianPolicy::Step& step, int offset, int dim) {
    GaussianPolicy::Step out;
    out.gain = step.gain.middleRows(offset, dim);
    out.offset = step.offset.segment(offset, dim);
    out.covariance = step.covariance.block(offset, offset, dim, dim);
    return out;
}

namespace {

double relative_change(const GaussianPolicy& a, const GaussianPolicy& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        const auto& s0 = a.steps[k];
        const auto& s1 = b.steps[k];
        const double scale = std::max({s0.gain.norm(), s0.offset.norm(), s0.covariance.norm(), 1.0});
        worst = std::max({worst, (s1.gain - s0.gain).norm() / scale,
                          (s1.offset - s0.offset).norm() / scale,
                          (s1.covariance - s0.covariance).norm() / scale});
    }
    return worst;
}

} // namespace

LearnResult reps_learn(const JointDynamics& dyn, const CostSpec& cost, const Eigen::VectorXd& start,
                       double t, double epsilon, int num_steps, const RepsParams& params,
                       const std::vector<Eigen::MatrixXd>* sampling_noise, Exec exec,
                       const std::function<Eigen::VectorXd(Rng&)>& start_sampler,
                       const GaussianPolicy* initial_policy) {
    LearnResult result;
    if (initial_policy) {
        if (initial_policy->num_steps() != num_steps)
            throw ConfigError("initial policy and segment plan disagree");
        result.policy = *initial_policy;
    } else {
        result.policy = GaussianPolicy::zero(num_steps, dyn.control_dim(), dyn.state_dim(),
                                             params.policy_init_scale);
    }

    const bool stochastic_start = static_cast<bool>(start_sampler);
    Eigen::MatrixXd features;        // per-rollout ψ(x⁰), built on the sampler path
    Eigen::VectorXd feature_target;  // ψ̂⁰ estimated from the sampler
    if (stochastic_start) {
        const Eigen::Index sdim = start.size();
        const Eigen::Index fdim = sdim + sdim * (sdim + 1) / 2;
        feature_target = Eigen::VectorXd::Zero(fdim);
        Rng rng(substream({params.seed, 0xFEA7u}));
        const int probes = 10000;
        for (int p = 0; p < probes; ++p)
            feature_target += start_features(start_sampler(rng));
        feature_target /= static_cast<double>(probes);
    }

    for (int iteration = 0; iteration < params.max_policy_iters; ++iteration) {
        const int rollouts = iteration == 0 ? params.rollouts_init : params.rollouts_iter;
        const std::uint64_t seed = substream({params.seed, 0x4EB5u, static_cast<std::uint64_t>(iteration)});

        TrajectoryBatch batch =
            stochastic_start
                ? sample_with_policy(dyn, result.policy, start_sampler, start.size(), t, epsilon,
                                     rollouts, seed, sampling_noise, exec)
                : sample_with_policy(dyn, result.policy, start, t, epsilon, rollouts, seed,
                                     sampling_noise, exec);
        evaluate_batch(dyn, cost, batch, exec);

        const Eigen::VectorXd log_q =
            old_path_density_batch(dyn, result.policy, batch, sampling_noise, exec);

        if (stochastic_start) {
            features.resize(batch.size(), feature_target.size());
            for (int y = 0; y < batch.size(); ++y)
                features.row(y) =
                    start_features(batch.paths[static_cast<std::size_t>(y)].row(0).transpose())
                        .transpose();
        }
        const DualSolution dual =
            solve_dual(log_q, batch.path_values, params.delta, features, feature_target);
        const Eigen::VectorXd weights =
            learning_weights(log_q, batch.path_values, dual, features);

        GaussianPolicy updated;
        updated.steps.reserve(static_cast<std::size_t>(num_steps));
        for (int k = 0; k < num_steps; ++k) {
            Eigen::MatrixXd states(batch.size(), dyn.state_dim());
            for (int y = 0; y < batch.size(); ++y)
                states.row(y) = batch.paths[static_cast<std::size_t>(y)].row(k);
            const Eigen::MatrixXd targets = recover_step_controls(dyn, batch, k);
            updated.steps.push_back(fit_policy_weighted_mle(states, targets, weights));
        }

        IterationStats stats;
        stats.iteration = iteration;
        stats.kappa = dual.kappa;
        stats.dual_value = dual.objective;
        stats.empirical_kl = empirical_kl(weights);
        stats.policy_change = relative_change(result.policy, updated);
        stats.theta_norm = dual.theta.size() ? dual.theta.norm() : 0.0;
        stats.rollouts = batch.size();
        for (const auto& s : updated.steps) {
            stats.gain_norm = std::max(stats.gain_norm, s.gain.norm());
            stats.offset_norm = std::max(stats.offset_norm, s.offset.norm());
            stats.covariance_norm = std::max(stats.covariance_norm, s.covariance.norm());
        }
        result.iterations.push_back(stats);
        result.rollouts_used += batch.size();
        result.policy = std::move(updated);
        if (stats.policy_change < params.policy_tol) break;
    }
    return result;
}

RepsRunLog reps_run(const pathintegral::Team& team, const RepsRunParams& params, Exec exec) {
    const int n = team.graph.n_agents();
    RepsRunLog out;
    std::vector<Eigen::VectorXd> state = team.initial_states;
    const int cycles = static_cast<int>(std::lround(params.t_final / params.control_cycle));

    std::vector<Eigen::VectorXd> applied(static_cast<std::size_t>(n));
    // policies persist across cycles; only the first cycle starts from zero
    std::vector<GaussianPolicy> carried(static_cast<std::size_t>(n));
    for (int cycle = 0; cycle < cycles; ++cycle) {
        const double t = cycle * params.control_cycle;
        const pathintegral::SegmentPlan plan = pathintegral::plan_segments(
            t, params.t_final, params.segments, params.control_cycle, params.eps_min);
        if (plan.num_steps == 0) break;
        for (int i = 0; i < n; ++i) {
            const JointDynamics& dyn = team.dynamics[static_cast<std::size_t>(i)];
            const CostSpec& cost = team.costs[static_cast<std::size_t>(i)];
            Eigen::VectorXd joint(dyn.state_dim());
            for (int j = 0; j < dyn.subsystem().size(); ++j)
                joint.segment(dyn.state_offset(j), dyn.agents()[static_cast<std::size_t>(j)].state_dim) =
                    state[static_cast<std::size_t>(dyn.subsystem().members[static_cast<std::size_t>(j)])];

            RepsParams learn = params.learn;
            learn.seed = substream({params.learn.seed, static_cast<std::uint64_t>(i),
                                    static_cast<std::uint64_t>(cycle)});
            // the large exploration batch backs the run's first policy
            // iteration; warm-started cycles refine with the small batches
            if (cycle > 0) learn.rollouts_init = learn.rollouts_iter;
            const auto* noise = team.sampling_noise.empty()
                                    ? nullptr
                                    : &team.sampling_noise[static_cast<std::size_t>(i)];
            GaussianPolicy& previous = carried[static_cast<std::size_t>(i)];
            const GaussianPolicy* warm = nullptr;
            if (previous.num_steps() >= plan.num_steps && previous.num_steps() > 0) {
                // once the segment count starts shrinking, the executed leading
                // steps fall off the front of the carried policy
                if (previous.num_steps() > plan.num_steps)
                    previous.steps.erase(previous.steps.begin(),
                                         previous.steps.begin() +
                                             (previous.num_steps() - plan.num_steps));
                warm = &previous;
            }
            LearnResult learned = reps_learn(dyn, cost, joint, t, plan.epsilon, plan.num_steps,
                                             learn, noise, exec, nullptr, warm);
            carried[static_cast<std::size_t>(i)] = learned.policy;
            out.iterations.insert(out.iterations.end(), learned.iterations.begin(),
                                  learned.iterations.end());

            // center agent's control from the marginal of the step-0 policy
            const int cdim = dyn.agents()[0].control_dim;
            const GaussianPolicy::Step marginal =
                marginal_policy(learned.policy.steps[0], 0, cdim);
            Eigen::VectorXd local = marginal.gain * joint + marginal.offset;
            if (!params.execute_mean) {
                Rng rng(substream({params.learn.seed, 0xAC7u, static_cast<std::uint64_t>(cycle),
                                   static_cast<std::uint64_t>(i)}));
                Eigen::VectorXd z(cdim);
                for (int c = 0; c < cdim; ++c) z(c) = rng.normal();
                const Eigen::LLT<Eigen::MatrixXd> llt(marginal.covariance);
                local += Eigen::MatrixXd(llt.matrixL()) * z;
            }
            applied[static_cast<std::size_t>(i)] = local;

            const Eigen::VectorXd joint_mean =
                learned.policy.steps[0].gain * joint + learned.policy.steps[0].offset;
            pathintegral::CycleRecord rec;
            rec.time = t;
            rec.agent = i;
            rec.state = state[static_cast<std::size_t>(i)];
            rec.local_control = local;
            rec.immediate_cost =
                cost.state_cost(joint, t) + 0.5 * joint_mean.dot(cost.control_weight * joint_mean);
            rec.rollouts_used = learned.rollouts_used;
            rec.effective_samples = 0.0;
            if (!learned.iterations.empty()) {
                rec.path_value_mean = learned.iterations.back().dual_value;
                rec.path_value_std = learned.iterations.back().empirical_kl;
            }
            out.log.records.push_back(std::move(rec));
        }
        for (int i = 0; i < n; ++i) {
            const AgentDynamics& a = team.dynamics[static_cast<std::size_t>(i)].agents()[0];
            Rng rng(substream({params.learn.seed, 0x5EEDu, static_cast<std::uint64_t>(cycle),
                               static_cast<std::uint64_t>(i)}));
            Eigen::VectorXd f(a.state_dim);
            a.drift(state[static_cast<std::size_t>(i)], t, f);
            Eigen::VectorXd xi(a.control_dim);
            for (int c = 0; c < a.control_dim; ++c) xi(c) = rng.normal();
            const Eigen::MatrixXd b = a.control_matrix_at(state[static_cast<std::size_t>(i)]);
            state[static_cast<std::size_t>(i)] +=
                params.control_cycle * (f + b * applied[static_cast<std::size_t>(i)]) +
                std::sqrt(params.control_cycle) * (b * (a.noise_factor * xi));
            if (!state[static_cast<std::size_t>(i)].allFinite())
                throw NonFiniteState("world state diverged at cycle " + std::to_string(cycle));
        }
    }
    out.log.final_states = state;
    return out;
}

} // namespace lsoc::reps
