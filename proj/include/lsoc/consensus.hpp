#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lsoc/errors.hpp"
#include "lsoc/lsmdp.hpp"
#include "lsoc/network.hpp"
#include "lsoc/parallel.hpp"

namespace lsoc::consensus {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Assignment of system rows to the computational agents of a subsystem.
struct RowPartition {
    /// Half-open row ranges [begin, end), one per member, disjoint and covering.
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;

    std::int64_t size(int member) const {
        return ranges[static_cast<std::size_t>(member)].second -
               ranges[static_cast<std::size_t>(member)].first;
    }
};

/// Contiguous even split; remainder rows go to the earliest members.
/// Throws TooFewRows when there are fewer rows than members.
RowPartition partition_rows(std::int64_t n_rows, int n_members);

/// Explicit sizes (custom policy); must cover all rows.
RowPartition partition_rows(std::int64_t n_rows, const std::vector<std::int64_t>& sizes);

/// Orthogonal projection onto the kernel of a stored row block A, applied
/// matrix-free as P v = v - Aᵀ (A Aᵀ)⁻¹ A v. The Gram factorization is sparse;
/// dense() materializes P for small blocks.
class ProjectionOperator {
public:
    explicit ProjectionOperator(SparseRowMatrix block);

    std::int64_t rows() const { return block_.rows(); }
    std::int64_t cols() const { return block_.cols(); }
    const SparseRowMatrix& block() const { return block_; }

    Eigen::VectorXd project(const Eigen::VectorXd& v) const;
    /// Minimum-norm solution Aᵀ (A Aᵀ)⁻¹ b of the block equations A z = b.
    Eigen::VectorXd min_norm_solution(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd dense() const;

private:
    Eigen::VectorXd solve_gram(const Eigen::VectorXd& b) const;

    SparseRowMatrix block_;
    SparseRowMatrix block_transpose_;
    // behind a pointer: the Eigen factorization type is neither copyable nor movable
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> gram_;
    bool use_cg_ = false;   // large well-conditioned blocks skip the factorization
};

/// Throws RankDeficientBlock when the block rows are not independent.
ProjectionOperator build_projection(const SparseRowMatrix& block);
ProjectionOperator build_projection(const Eigen::MatrixXd& block);

struct ConsensusResult {
    Eigen::VectorXd solution;               // average of the member vectors
    std::vector<Eigen::VectorXd> members;   // per-member final iterates
    int iterations = 0;
    double disagreement = 0.0;              // max pairwise sup-norm
    double residual = 0.0;                  // ||A solution - b||_inf
};

/// Observer called once per iteration with (iteration, disagreement, residual).
using IterationCallback = std::function<void(int, double, double)>;

/// Synchronous projection-consensus iteration
///   Z_j <- Z_j - P_j (Z_j - mean of the other members' Z)
/// over a subsystem treated as fully connected. Initial vectors must satisfy
/// their own row blocks (defaults to the minimum-norm feasible point).
/// Converged when members agree and the averaged vector satisfies the full
/// system, both within eps_tol.
ConsensusResult consensus_solve(const SparseRowMatrix& matrix, const Eigen::VectorXd& rhs,
                                const RowPartition& partition,
                                const std::vector<Eigen::VectorXd>* init = nullptr,
                                double eps_tol = 1e-9, int max_iters = 100000,
                                Exec exec = Exec::parallel,
                                const IterationCallback& on_iteration = nullptr);

/// Desirability of a joint model solved distributively: rows of
/// [I - interior_coupling | boundary_coupling z_B] are partitioned evenly
/// over the subsystem members.
lsmdp::Desirability solve_desirability_consensus(const lsmdp::JointModel& model,
                                                 const lsmdp::DesirabilitySystem& sys,
                                                 double eps_tol = 1e-9, int max_iters = 100000,
                                                 Exec exec = Exec::parallel,
                                                 const IterationCallback& on_iteration = nullptr);

enum class ComplexityMode { centralized, parallel };

/// Per-agent row counts m of the desirability system held by one agent:
/// centralized keeps the whole subsystem system, |I|^{|subsystem|};
/// parallel splits it over the subsystem, ceil(m / |subsystem|).
/// `n_states` is the per-agent state count; `n_boundary` of them are exits.
std::vector<std::uint64_t> complexity_report(network::Topology family, int n_agents, int n_states,
                                             ComplexityMode mode, int n_boundary = 1);

} // namespace lsoc::consensus
