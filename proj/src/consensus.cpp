#include "lsoc/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lsoc::consensus {

RowPartition partition_rows(std::int64_t n_rows, int n_members) {
    if (n_rows < n_members)
        throw TooFewRows("cannot split " + std::to_string(n_rows) + " rows over " +
                         std::to_string(n_members) + " members");
    RowPartition part;
    const std::int64_t base = n_rows / n_members;
    const std::int64_t remainder = n_rows % n_members;
    std::int64_t begin = 0;
    for (int j = 0; j < n_members; ++j) {
        const std::int64_t len = base + (j < remainder ? 1 : 0);
        part.ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return part;
}

RowPartition partition_rows(std::int64_t n_rows, const std::vector<std::int64_t>& sizes) {
    std::int64_t total = 0;
    for (std::int64_t s : sizes) {
        if (s <= 0) throw TooFewRows("custom partition sizes must be positive");
        total += s;
    }
    if (total != n_rows) throw TooFewRows("custom partition sizes must cover all rows");
    RowPartition part;
    std::int64_t begin = 0;
    for (std::int64_t s : sizes) {
        part.ranges.emplace_back(begin, begin + s);
        begin += s;
    }
    return part;
}

namespace {
constexpr std::int64_t kFactorizationLimit = 1500;
}

ProjectionOperator::ProjectionOperator(SparseRowMatrix block)
    : block_(std::move(block)), block_transpose_(block_.transpose()) {
    use_cg_ = block_.rows() > kFactorizationLimit;
    if (use_cg_) {
        // consistency probe: a stalled solve exposes dependent rows
        Eigen::VectorXd probe(block_.rows());
        for (std::int64_t i = 0; i < probe.size(); ++i) probe(i) = (i % 2 == 0) ? 1.0 : -0.5;
        const Eigen::VectorXd x = solve_gram(probe);
        const double residual =
            (block_ * (block_transpose_ * x) - probe).norm() / std::max(probe.norm(), 1e-300);
        if (!(residual <= 1e-9))
            throw RankDeficientBlock("projection block has (numerically) dependent rows");
        return;
    }
    gram_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    Eigen::SparseMatrix<double> gram = (block_ * block_transpose_).pruned();
    gram_->compute(gram);
    if (gram_->info() != Eigen::Success)
        throw RankDeficientBlock("projection block has dependent rows (factorization failed)");
    const Eigen::VectorXd d = gram_->vectorD();
    const double dmax = d.maxCoeff();
    if (dmax <= 0.0 || d.minCoeff() <= 1e-12 * dmax)
        throw RankDeficientBlock("projection block has (numerically) dependent rows");
}

Eigen::VectorXd ProjectionOperator::solve_gram(const Eigen::VectorXd& b) const {
    if (!use_cg_) return gram_->solve(b);
    // conjugate gradients on (A Aᵀ) x = b, matrix-free; the desirability blocks
    // are strongly diagonally dominant so this converges in a handful of steps
    const double b_norm = b.norm();
    if (b_norm == 0.0) return Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd x = b;
    Eigen::VectorXd r = b - block_ * (block_transpose_ * x);
    Eigen::VectorXd p = r;
    double rho = r.squaredNorm();
    const double tol2 = (1e-14 * b_norm) * (1e-14 * b_norm);
    const std::int64_t cap = std::max<std::int64_t>(500, b.size());
    for (std::int64_t it = 0; it < cap && rho > tol2; ++it) {
        const Eigen::VectorXd ap = block_ * (block_transpose_ * p);
        const double alpha = rho / p.dot(ap);
        if (!std::isfinite(alpha)) break;
        x += alpha * p;
        r -= alpha * ap;
        const double rho_next = r.squaredNorm();
        p = r + (rho_next / rho) * p;
        rho = rho_next;
    }
    return x;
}

Eigen::VectorXd ProjectionOperator::project(const Eigen::VectorXd& v) const {
    return v - block_transpose_ * solve_gram(block_ * v);
}

Eigen::VectorXd ProjectionOperator::min_norm_solution(const Eigen::VectorXd& b) const {
    return block_transpose_ * solve_gram(b);
}

Eigen::MatrixXd ProjectionOperator::dense() const {
    const std::int64_t n = cols();
    Eigen::MatrixXd p(n, n);
    for (std::int64_t c = 0; c < n; ++c) p.col(c) = project(Eigen::VectorXd::Unit(n, c));
    return p;
}

ProjectionOperator build_projection(const SparseRowMatrix& block) {
    return ProjectionOperator(block);
}

ProjectionOperator build_projection(const Eigen::MatrixXd& block) {
    return ProjectionOperator(block.sparseView());
}

namespace {

double max_pairwise_disagreement(const std::vector<Eigen::VectorXd>& z) {
    double worst = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j)
        for (std::size_t k = j + 1; k < z.size(); ++k)
            worst = std::max(worst, (z[j] - z[k]).lpNorm<Eigen::Infinity>());
    return worst;
}

} // namespace

ConsensusResult consensus_solve(const SparseRowMatrix& matrix, const Eigen::VectorXd& rhs,
                                const RowPartition& partition,
                                const std::vector<Eigen::VectorXd>* init, double eps_tol,
                                int max_iters, Exec exec, const IterationCallback& on_iteration) {
    const int members = static_cast<int>(partition.ranges.size());
    const std::int64_t n = matrix.cols();

    std::vector<ProjectionOperator> projections;
    projections.reserve(static_cast<std::size_t>(members));
    std::vector<Eigen::VectorXd> block_rhs(static_cast<std::size_t>(members));
    for (int j = 0; j < members; ++j) {
        const auto [begin, end] = partition.ranges[static_cast<std::size_t>(j)];
        projections.emplace_back(SparseRowMatrix(matrix.middleRows(begin, end - begin)));
        block_rhs[static_cast<std::size_t>(j)] = rhs.segment(begin, end - begin);
    }

    std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(members));
    if (init) {
        if (static_cast<int>(init->size()) != members)
            throw InfeasibleInitialization("one initial vector per member expected");
        for (int j = 0; j < members; ++j) {
            const Eigen::VectorXd& zj = (*init)[static_cast<std::size_t>(j)];
            const double violation =
                (projections[static_cast<std::size_t>(j)].block() * zj - block_rhs[static_cast<std::size_t>(j)])
                    .lpNorm<Eigen::Infinity>();
            if (violation > 1e-8)
                throw InfeasibleInitialization("member " + std::to_string(j) +
                                               " initial vector violates its rows by " +
                                               std::to_string(violation));
            z[static_cast<std::size_t>(j)] = zj;
        }
    } else {
        for (int j = 0; j < members; ++j)
            z[static_cast<std::size_t>(j)] =
                projections[static_cast<std::size_t>(j)].min_norm_solution(block_rhs[static_cast<std::size_t>(j)]);
    }

    ConsensusResult out;
    auto finalize = [&](int iters) {
        Eigen::VectorXd avg = Eigen::VectorXd::Zero(n);
        for (const auto& zj : z) avg += zj;
        avg /= static_cast<double>(members);
        out.solution = std::move(avg);
        out.members = z;
        out.iterations = iters;
        out.disagreement = max_pairwise_disagreement(z);
        out.residual = (matrix * out.solution - rhs).lpNorm<Eigen::Infinity>();
    };

    if (members == 1) {
        // The single agent holds every row; its feasible point solves the system.
        finalize(1);
        if (on_iteration) on_iteration(1, out.disagreement, out.residual);
        return out;
    }

    std::vector<Eigen::VectorXd> snapshot(static_cast<std::size_t>(members));
    for (int iter = 1; iter <= max_iters; ++iter) {
        snapshot = z;
        // Synchronous exchange: everyone updates from the previous iterates.
        parallel_for(exec, members, [&](std::int64_t j) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
            for (int k = 0; k < members; ++k)
                if (k != j) mean += snapshot[static_cast<std::size_t>(k)];
            mean /= static_cast<double>(members - 1);
            const auto& p = projections[static_cast<std::size_t>(j)];
            z[static_cast<std::size_t>(j)] =
                snapshot[static_cast<std::size_t>(j)] -
                p.project(snapshot[static_cast<std::size_t>(j)] - mean);
        });
        finalize(iter);
        if (on_iteration) on_iteration(iter, out.disagreement, out.residual);
        if (out.disagreement <= eps_tol && out.residual <= eps_tol) return out;
    }
    throw MaxIterationsExceeded("consensus did not reach agreement within " +
                                std::to_string(max_iters) + " iterations");
}

lsmdp::Desirability solve_desirability_consensus(const lsmdp::JointModel& model,
                                                 const lsmdp::DesirabilitySystem& sys,
                                                 double eps_tol, int max_iters, Exec exec,
                                                 const IterationCallback& on_iteration) {
    const std::int64_t n = sys.interior_coupling.rows();
    SparseRowMatrix system_matrix(n, n);
    {
        SparseRowMatrix identity(n, n);
        identity.setIdentity();
        system_matrix = identity - sys.interior_coupling;
    }
    const Eigen::VectorXd rhs = sys.boundary_coupling * sys.boundary_values;
    const RowPartition partition = partition_rows(n, model.subsystem().size());
    const ConsensusResult result =
        consensus_solve(system_matrix, rhs, partition, nullptr, eps_tol, max_iters, exec, on_iteration);

    lsmdp::Desirability d;
    d.interior = result.solution.cwiseMax(lsmdp::kDesirabilityFloor);
    d.boundary = sys.boundary_values;
    return d;
}

std::vector<std::uint64_t> complexity_report(network::Topology family, int n_agents, int n_states,
                                             ComplexityMode mode, int n_boundary) {
    if (n_agents < 1) throw ConfigError("complexity_report needs at least one agent");
    if (n_states <= n_boundary) throw ConfigError("need at least one interior state");
    const network::Graph g = network::make_topology(family, n_agents);
    const std::uint64_t interior = static_cast<std::uint64_t>(n_states - n_boundary);
    std::vector<std::uint64_t> report(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
        const std::uint64_t subsystem = static_cast<std::uint64_t>(g.degree(i)) + 1;
        std::uint64_t m = 1;
        for (std::uint64_t k = 0; k < subsystem; ++k) {
            if (m > std::numeric_limits<std::uint64_t>::max() / interior)
                throw ConfigError("complexity overflow; reduce agents or states");
            m *= interior;
        }
        if (mode == ComplexityMode::parallel) m = (m + subsystem - 1) / subsystem;
        report[static_cast<std::size_t>(i)] = m;
    }
    return report;
}

} // namespace lsoc::consensus
