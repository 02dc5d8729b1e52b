#include "lsoc/pathintegral.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace lsoc::pathintegral {

JointDynamics::JointDynamics(network::Subsystem subsystem, std::vector<AgentDynamics> agents)
    : subsystem_(std::move(subsystem)), agents_(std::move(agents)) {
    if (agents_.size() != static_cast<std::size_t>(subsystem_.size()))
        throw ConfigError("joint dynamics needs one agent model per subsystem member");
    for (const AgentDynamics& a : agents_) {
        if (!a.drift) throw ConfigError("agent dynamics needs a drift function");
        if (a.actuated_dim <= 0 || a.actuated_dim > a.state_dim)
            throw ConfigError("actuated dimension must lie in (0, state_dim]");
        if (a.constant_control_matrix()) {
            if (a.control_matrix.rows() != a.state_dim || a.control_matrix.cols() != a.control_dim)
                throw ConfigError("control matrix shape mismatch");
            const int idle = a.state_dim - a.actuated_dim;
            if (idle > 0 && a.control_matrix.topRows(idle).cwiseAbs().maxCoeff() != 0.0)
                throw ConfigError("non-actuated control-matrix rows must be zero");
        } else {
            constant_B_ = false;
        }
        if (a.noise_factor.rows() != a.control_dim || a.noise_factor.cols() != a.control_dim)
            throw ConfigError("noise factor must be control_dim square");
        state_offsets_.push_back(state_dim_);
        control_offsets_.push_back(control_dim_);
        actuated_offsets_.push_back(actuated_dim_);
        state_dim_ += a.state_dim;
        control_dim_ += a.control_dim;
        actuated_dim_ += a.actuated_dim;
    }
    joint_noise_ = Eigen::MatrixXd::Zero(control_dim_, control_dim_);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const int off = control_offsets_[j];
        const int p = agents_[j].control_dim;
        joint_noise_.block(off, off, p, p) = agents_[j].noise_factor;
    }
}

void JointDynamics::drift(const Eigen::VectorXd& x, double t, Eigen::VectorXd& out) const {
    out.resize(state_dim_);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const int off = state_offsets_[j];
        const int m = agents_[j].state_dim;
        agents_[j].drift(x.segment(off, m), t, out.segment(off, m));
    }
}

void JointDynamics::actuated_drift(const Eigen::VectorXd& x, double t, Eigen::VectorXd& out) const {
    out.resize(actuated_dim_);
    Eigen::VectorXd full;
    drift(x, t, full);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const AgentDynamics& a = agents_[j];
        out.segment(actuated_offsets_[j], a.actuated_dim) =
            full.segment(state_offsets_[j] + a.state_dim - a.actuated_dim, a.actuated_dim);
    }
}

Eigen::VectorXd JointDynamics::actuated_part(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(actuated_dim_);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const AgentDynamics& a = agents_[j];
        out.segment(actuated_offsets_[j], a.actuated_dim) =
            x.segment(state_offsets_[j] + a.state_dim - a.actuated_dim, a.actuated_dim);
    }
    return out;
}

Eigen::MatrixXd JointDynamics::actuated_control_matrix(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(actuated_dim_, control_dim_);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const AgentDynamics& a = agents_[j];
        const Eigen::MatrixXd b = a.control_matrix_at(x.segment(state_offsets_[j], a.state_dim));
        out.block(actuated_offsets_[j], control_offsets_[j], a.actuated_dim, a.control_dim) =
            b.bottomRows(a.actuated_dim);
    }
    return out;
}

Eigen::MatrixXd JointDynamics::full_control_matrix(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(state_dim_, control_dim_);
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        const AgentDynamics& a = agents_[j];
        out.block(state_offsets_[j], control_offsets_[j], a.state_dim, a.control_dim) =
            a.control_matrix_at(x.segment(state_offsets_[j], a.state_dim));
    }
    return out;
}

Eigen::MatrixXd JointDynamics::diffusion_metric(const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd bd = actuated_control_matrix(x);
    const Eigen::MatrixXd bs = bd * joint_noise_;
    return bs * bs.transpose();
}

double CostSpec::compatibility_residual(const JointDynamics& dyn) const {
    const Eigen::MatrixXd sigma2 = dyn.noise_factor() * dyn.noise_factor().transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(control_weight);
    if (llt.info() != Eigen::Success)
        throw SingularR("control weight matrix is not positive definite");
    const Eigen::MatrixXd r_inv =
        llt.solve(Eigen::MatrixXd::Identity(control_weight.rows(), control_weight.cols()));
    return (sigma2 - temperature * r_inv).norm();
}

Eigen::VectorXd hjb_optimal_control(const JointDynamics& dyn, const CostSpec& cost,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& value_gradient) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cost.control_weight);
    if (llt.info() != Eigen::Success)
        throw SingularR("control weight matrix is not positive definite");
    return -llt.solve(dyn.full_control_matrix(x).transpose() * value_gradient);
}

namespace {

/// Per-agent noise factors to use while exploring; defaults to the nominal σ.
const Eigen::MatrixXd& noise_of(const JointDynamics& dyn,
                                const std::vector<Eigen::MatrixXd>* sampling_noise, std::size_t j) {
    if (sampling_noise) return (*sampling_noise)[j];
    return dyn.agents()[j].noise_factor;
}

} // namespace

TrajectoryBatch simulate_uncontrolled(const JointDynamics& dyn, const Eigen::VectorXd& start,
                                      double t, double t_final, int num_steps, int num_rollouts,
                                      std::uint64_t seed,
                                      const std::vector<Eigen::MatrixXd>* sampling_noise, Exec exec,
                                      const std::function<bool(const Eigen::VectorXd&)>& stop_region) {
    if (num_steps < 1 || num_rollouts < 1)
        throw ConfigError("need at least one segment and one rollout");
    if (start.size() != dyn.state_dim()) throw ConfigError("start state dimension mismatch");
    if (sampling_noise && sampling_noise->size() != dyn.agents().size())
        throw ConfigError("one sampling noise factor per member expected");

    TrajectoryBatch batch;
    batch.t0 = t;
    batch.epsilon = (t_final - t) / num_steps;
    batch.num_steps = num_steps;
    batch.start = start;
    batch.seed = seed;
    batch.paths.assign(static_cast<std::size_t>(num_rollouts),
                       Eigen::MatrixXd(num_steps + 1, dyn.state_dim()));
    batch.exit_steps.assign(static_cast<std::size_t>(num_rollouts), num_steps);
    for (std::size_t j = 0; j < dyn.agents().size(); ++j)
        batch.sampling_noise_used.push_back(noise_of(dyn, sampling_noise, j));

    const double eps = batch.epsilon;
    const double sqrt_eps = std::sqrt(eps);
    const std::size_t members = dyn.agents().size();

    parallel_for(exec, num_rollouts, [&](std::int64_t y) {
        Rng rng(substream({seed, static_cast<std::uint64_t>(y)}));
        Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(y)];
        Eigen::VectorXd x = start;
        Eigen::VectorXd f(dyn.state_dim());
        Eigen::VectorXd xi;
        path.row(0) = x.transpose();
        int frozen_at = num_steps;
        for (int k = 0; k < num_steps; ++k) {
            if (frozen_at < num_steps) {
                path.row(k + 1) = x.transpose();
                continue;
            }
            const double tk = t + k * eps;
            dyn.drift(x, tk, f);
            Eigen::VectorXd next = x + eps * f;
            for (std::size_t j = 0; j < members; ++j) {
                const AgentDynamics& a = dyn.agents()[j];
                xi.resize(a.control_dim);
                for (int c = 0; c < a.control_dim; ++c) xi(c) = rng.normal();
                const Eigen::MatrixXd b = a.control_matrix_at(x.segment(dyn.state_offset(static_cast<int>(j)), a.state_dim));
                next.segment(dyn.state_offset(static_cast<int>(j)) + a.state_dim - a.actuated_dim,
                             a.actuated_dim) +=
                    sqrt_eps * (b.bottomRows(a.actuated_dim) * (noise_of(dyn, sampling_noise, j) * xi));
            }
            if (!next.allFinite())
                throw NonFiniteState("rollout " + std::to_string(y) + " diverged at segment " +
                                     std::to_string(k));
            x = next;
            path.row(k + 1) = x.transpose();
            if (stop_region && frozen_at == num_steps && stop_region(x)) frozen_at = k + 1;
        }
        batch.exit_steps[static_cast<std::size_t>(y)] = frozen_at;
    });
    return batch;
}

namespace {

struct MetricCache {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
};

MetricCache factor_metric(const Eigen::MatrixXd& h) {
    MetricCache c;
    c.llt.compute(h);
    if (c.llt.info() != Eigen::Success)
        throw SingularH("diffusion metric is not positive definite");
    c.log_det = 2.0 * Eigen::MatrixXd(c.llt.matrixL()).diagonal().array().log().sum();
    return c;
}

} // namespace

namespace {

double path_value_walk(const JointDynamics& dyn, const CostSpec& cost,
                       const TrajectoryBatch& batch, int rollout, const MetricCache* fixed) {
    const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(rollout)];
    const double eps = batch.epsilon;
    const double lam = cost.temperature;
    const int last = batch.exit_steps[static_cast<std::size_t>(rollout)];

    MetricCache local;
    double value = cost.terminal_cost(path.row(last).transpose()) / lam;
    Eigen::VectorXd fd(dyn.actuated_dim());
    for (int k = 0; k < last; ++k) {
        const Eigen::VectorXd xk = path.row(k).transpose();
        const double tk = batch.t0 + k * eps;
        value += eps / lam * cost.state_cost(xk, tk);
        const MetricCache* cache = fixed;
        if (!cache) {
            local = factor_metric(dyn.diffusion_metric(xk));
            cache = &local;
        }
        value += 0.5 * cache->log_det;
        dyn.actuated_drift(xk, tk, fd);
        const Eigen::VectorXd increment =
            (dyn.actuated_part(path.row(k + 1).transpose()) - dyn.actuated_part(xk)) / eps - fd;
        value += 0.5 * eps * increment.dot(cache->llt.solve(increment));
    }
    return value;
}

} // namespace

double generalized_path_value(const JointDynamics& dyn, const CostSpec& cost,
                              const TrajectoryBatch& batch, int rollout) {
    if (dyn.constant_control_matrices()) {
        const MetricCache cache = factor_metric(dyn.diffusion_metric(batch.start));
        return path_value_walk(dyn, cost, batch, rollout, &cache);
    }
    return path_value_walk(dyn, cost, batch, rollout, nullptr);
}

Eigen::VectorXd initial_control_variable(const JointDynamics& dyn, const CostSpec& cost,
                                         const TrajectoryBatch& batch, int rollout) {
    const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(rollout)];
    const double eps = batch.epsilon;
    const Eigen::VectorXd x0 = path.row(0).transpose();
    const MetricCache cache = factor_metric(dyn.diffusion_metric(x0));
    Eigen::VectorXd fd(dyn.actuated_dim());
    dyn.actuated_drift(x0, batch.t0, fd);
    const Eigen::VectorXd increment =
        (dyn.actuated_part(path.row(1).transpose()) - dyn.actuated_part(x0)) / eps - fd;
    Eigen::VectorXd u = cache.llt.solve(increment);
    if (cost.state_cost_actuated_gradient)
        u -= eps / cost.temperature * cost.state_cost_actuated_gradient(x0, batch.t0);
    return u;
}

namespace {

/// Exploration noise factors the batch was generated with.
Eigen::MatrixXd batch_noise_factor(const JointDynamics& dyn, const TrajectoryBatch& batch) {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dyn.control_dim(), dyn.control_dim());
    for (std::size_t j = 0; j < dyn.agents().size(); ++j) {
        const int off = dyn.control_offset(static_cast<int>(j));
        const int p = dyn.agents()[j].control_dim;
        sigma.block(off, off, p, p) = batch.sampling_noise_used.empty()
                                          ? dyn.agents()[j].noise_factor
                                          : batch.sampling_noise_used[j];
    }
    return sigma;
}

/// Log density of a rollout under the uncontrolled dynamics it was sampled
/// from; `fixed` shares a factorization across rollouts.
double density_walk(const JointDynamics& dyn, const Eigen::MatrixXd& sigma,
                    const TrajectoryBatch& batch, int rollout, const MetricCache* fixed) {
    const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(rollout)];
    const double eps = batch.epsilon;
    const int last = batch.exit_steps[static_cast<std::size_t>(rollout)];
    const int d = dyn.actuated_dim();

    MetricCache local;
    double log_density = 0.0;
    Eigen::VectorXd fd(d);
    for (int k = 0; k < last; ++k) {
        const Eigen::VectorXd xk = path.row(k).transpose();
        const MetricCache* cache = fixed;
        if (!cache) {
            const Eigen::MatrixXd bs = dyn.actuated_control_matrix(xk) * sigma;
            local = factor_metric(bs * bs.transpose());
            cache = &local;
        }
        dyn.actuated_drift(xk, batch.t0 + k * eps, fd);
        const Eigen::VectorXd v =
            (dyn.actuated_part(path.row(k + 1).transpose()) - dyn.actuated_part(xk)) / eps - fd;
        log_density += -0.5 * (d * std::log(2.0 * M_PI * eps) + cache->log_det) -
                       0.5 * eps * v.dot(cache->llt.solve(v));
    }
    return log_density;
}

double uncontrolled_log_density(const JointDynamics& dyn, const TrajectoryBatch& batch,
                                int rollout) {
    const Eigen::MatrixXd sigma = batch_noise_factor(dyn, batch);
    if (dyn.constant_control_matrices()) {
        const Eigen::MatrixXd bs = dyn.actuated_control_matrix(batch.start) * sigma;
        const MetricCache cache = factor_metric(bs * bs.transpose());
        return density_walk(dyn, sigma, batch, rollout, &cache);
    }
    return density_walk(dyn, sigma, batch, rollout, nullptr);
}

} // namespace

void evaluate_batch(const JointDynamics& dyn, const CostSpec& cost, TrajectoryBatch& batch,
                    Exec exec) {
    const int y = batch.size();
    batch.path_values.resize(y);
    batch.initial_controls.resize(y, dyn.actuated_dim());
    batch.sampling_log_density.resize(y);
    const bool constant = dyn.constant_control_matrices();
    MetricCache nominal, exploration;
    const Eigen::MatrixXd sigma = batch_noise_factor(dyn, batch);
    if (constant) {
        nominal = factor_metric(dyn.diffusion_metric(batch.start));
        const Eigen::MatrixXd bs = dyn.actuated_control_matrix(batch.start) * sigma;
        exploration = factor_metric(bs * bs.transpose());
    }
    parallel_for(exec, y, [&](std::int64_t i) {
        batch.path_values(i) =
            path_value_walk(dyn, cost, batch, static_cast<int>(i), constant ? &nominal : nullptr);
        batch.initial_controls.row(i) =
            initial_control_variable(dyn, cost, batch, static_cast<int>(i)).transpose();
        batch.sampling_log_density(i) = density_walk(dyn, sigma, batch, static_cast<int>(i),
                                                     constant ? &exploration : nullptr);
    });
    if (!batch.path_values.allFinite())
        throw NonFiniteState("a generalized path value is not finite");
}

namespace {

/// Stable softmax with exact zeros below the representable range (denormal
/// weights would drag the downstream reductions through slow paths).
Eigen::VectorXd shifted_softmax(const Eigen::VectorXd& exponents) {
    const double peak = exponents.maxCoeff();
    Eigen::VectorXd w(exponents.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double e = exponents(i) - peak;
        w(i) = e < -700.0 ? 0.0 : std::exp(e);
    }
    return w / w.sum();
}

} // namespace

Eigen::VectorXd mc_path_weights(const TrajectoryBatch& batch) {
    if (batch.size() < 1) throw ConfigError("empty batch");
    // stabilized by the smallest path value (the largest exponent)
    return shifted_softmax(-batch.path_values);
}

Eigen::VectorXd importance_path_weights(const TrajectoryBatch& batch) {
    if (batch.size() < 1) throw ConfigError("empty batch");
    if (batch.sampling_log_density.size() != batch.path_values.size())
        throw ConfigError("batch not evaluated: sampling densities missing");
    // p̃*(ℓ) ∝ exp(−S̃); sampled from q, so weight by exp(−S̃)/q
    return shifted_softmax(-(batch.path_values + batch.sampling_log_density));
}

Eigen::VectorXd mc_joint_control(const JointDynamics& dyn, const CostSpec& cost,
                                 const TrajectoryBatch& batch) {
    const Eigen::VectorXd weights = importance_path_weights(batch);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dyn.actuated_dim());
    for (int yy = 0; yy < batch.size(); ++yy) mean += weights(yy) * batch.initial_controls.row(yy).transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(cost.control_weight);
    if (llt.info() != Eigen::Success)
        throw SingularR("control weight matrix is not positive definite");
    return cost.temperature *
           llt.solve(dyn.actuated_control_matrix(batch.start).transpose() * mean);
}

DesirabilityEstimate desirability_estimate(const JointDynamics& dyn, const CostSpec& cost,
                                           const TrajectoryBatch& batch) {
    const double lam = cost.temperature;
    const double eps = batch.epsilon;
    double acc = 0.0;
    for (int y = 0; y < batch.size(); ++y) {
        const Eigen::MatrixXd& path = batch.paths[static_cast<std::size_t>(y)];
        const int last = batch.exit_steps[static_cast<std::size_t>(y)];
        double exponent = -cost.terminal_cost(path.row(last).transpose()) / lam;
        for (int k = 0; k < last; ++k)
            exponent -= eps / lam * cost.state_cost(path.row(k).transpose(), batch.t0 + k * eps);
        acc += std::exp(exponent);
    }
    DesirabilityEstimate est;
    est.value = acc / batch.size();
    est.log_offset = 0.5 * batch.num_steps * dyn.actuated_dim() *
                     std::log(2.0 * M_PI * lam * batch.epsilon);
    return est;
}

SegmentPlan plan_segments(double t, double t_final, int segments, double control_cycle,
                          double eps_min) {
    SegmentPlan plan;
    const double remaining = t_final - t;
    if (remaining <= 0.0) return plan;
    if (remaining / segments >= eps_min) {
        plan.num_steps = segments;
    } else {
        plan.num_steps = std::max(1, static_cast<int>(std::lround(remaining / control_cycle)));
    }
    plan.epsilon = remaining / plan.num_steps;
    return plan;
}

RunLog receding_horizon_run(const Team& team, const SamplingRunParams& params, Exec exec) {
    const int n = team.graph.n_agents();
    RunLog log;
    std::vector<Eigen::VectorXd> state = team.initial_states;
    const int cycles = static_cast<int>(std::lround(params.t_final / params.control_cycle));

    std::vector<Eigen::VectorXd> applied(static_cast<std::size_t>(n));
    for (int cycle = 0; cycle < cycles; ++cycle) {
        const double t = cycle * params.control_cycle;
        const SegmentPlan plan =
            plan_segments(t, params.t_final, params.segments, params.control_cycle, params.eps_min);
        if (plan.num_steps == 0) break;
        for (int i = 0; i < n; ++i) {
            const JointDynamics& dyn = team.dynamics[static_cast<std::size_t>(i)];
            const CostSpec& cost = team.costs[static_cast<std::size_t>(i)];
            // measured joint state of the subsystem
            Eigen::VectorXd joint(dyn.state_dim());
            for (int j = 0; j < dyn.subsystem().size(); ++j)
                joint.segment(dyn.state_offset(j), dyn.agents()[static_cast<std::size_t>(j)].state_dim) =
                    state[static_cast<std::size_t>(dyn.subsystem().members[static_cast<std::size_t>(j)])];

            TrajectoryBatch batch = simulate_uncontrolled(
                dyn, joint, t, params.t_final, plan.num_steps, params.rollouts,
                substream({params.seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(cycle)}),
                team.sampling_noise.empty() ? nullptr : &team.sampling_noise[static_cast<std::size_t>(i)],
                exec);
            evaluate_batch(dyn, cost, batch, exec);
            const Eigen::VectorXd joint_control = mc_joint_control(dyn, cost, batch);
            const Eigen::VectorXd weights = importance_path_weights(batch);

            CycleRecord rec;
            rec.time = t;
            rec.agent = i;
            rec.state = state[static_cast<std::size_t>(i)];
            rec.local_control = joint_control.head(dyn.agents()[0].control_dim);
            rec.immediate_cost = cost.state_cost(joint, t) +
                                 0.5 * joint_control.dot(cost.control_weight * joint_control);
            rec.effective_samples = 1.0 / weights.squaredNorm();
            rec.path_value_mean = batch.path_values.mean();
            rec.path_value_std = std::sqrt(
                (batch.path_values.array() - rec.path_value_mean).square().sum() /
                std::max(1, batch.size() - 1));
            rec.rollouts_used = batch.size();
            log.records.push_back(std::move(rec));
            applied[static_cast<std::size_t>(i)] = joint_control.head(dyn.agents()[0].control_dim);
        }
        // world advances one cycle under the nominal noise
        for (int i = 0; i < n; ++i) {
            const AgentDynamics& a = team.dynamics[static_cast<std::size_t>(i)].agents()[0];
            Rng rng(substream({params.seed, 0x5EEDu, static_cast<std::uint64_t>(cycle),
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
    log.final_states = state;
    return log;
}

} // namespace lsoc::pathintegral
