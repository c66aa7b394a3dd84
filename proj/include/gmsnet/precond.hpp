#pragma once

#include "gmsnet/assembly.hpp"
#include "gmsnet/mesh.hpp"
#include "gmsnet/spectral.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

namespace gms {

class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual Eigen::VectorXd apply(const Eigen::VectorXd& r) const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    Eigen::VectorXd apply(const Eigen::VectorXd& r) const override { return r; }
};

/// Exact solves with the diagonal blocks of A on each coarse-element tile.
class BlockJacobiSmoother final : public Preconditioner {
public:
    struct Impl;

    explicit BlockJacobiSmoother(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

    Eigen::VectorXd apply(const Eigen::VectorXd& r) const override;
    Index block_count() const;
    /// Dense copy of the diagonal block of element j (tile row-major order).
    Eigen::MatrixXd block_matrix(Index element) const;

private:
    std::shared_ptr<const Impl> impl_;
};

/// Extracts and factorizes the diagonal block of every coarse element.
/// A block without coupling to the rest of the mesh (a single coarse
/// element) is singular and rejected.
BlockJacobiSmoother build_block_jacobi(const SparseOperator& a, const TwoScaleMesh& mesh);

/// Two-grid preconditioner: pre-smooth, coarse correction through
/// A_c = P^T A P, post-smooth.
///
/// A_c inherits the constant kernel of A. The coarse solve fixes one coarse
/// degree of freedom to zero: the last index whose contribution
/// |c_i| * ||P e_i|| to the constant vector (P c = 1) is at least half the
/// largest one. The remaining system is SPD and factorized once.
class TwoGridPreconditioner final : public Preconditioner {
public:
    TwoGridPreconditioner(SparseOperator a, const Prolongation& p, BlockJacobiSmoother smoother);

    Eigen::VectorXd apply(const Eigen::VectorXd& r) const override;

    /// A particular solution of A_c x = b with x[pinned] = 0; b must be
    /// orthogonal to the coarse kernel vector.
    Eigen::VectorXd coarse_solve(const Eigen::VectorXd& b) const;

    const SparseOperator& fine_operator() const { return a_; }
    const Eigen::SparseMatrix<double>& prolongation() const { return p_; }
    const Eigen::SparseMatrix<double>& coarse_operator() const { return coarse_; }
    /// Coarse coefficients of the global constant vector.
    const Eigen::VectorXd& coarse_kernel() const { return kernel_; }
    Index pinned_index() const { return pinned_; }
    const BlockJacobiSmoother& smoother() const { return smoother_; }

private:
    struct CoarseFactor;

    SparseOperator a_;
    Eigen::SparseMatrix<double> p_;
    Eigen::SparseMatrix<double> coarse_;
    Eigen::VectorXd kernel_;
    Index pinned_ = 0;
    BlockJacobiSmoother smoother_;
    std::shared_ptr<const CoarseFactor> factor_;
};

/// Fails with ContractError when the constant vector is not in im(P).
TwoGridPreconditioner build_two_grid(const SparseOperator& a, const Prolongation& p,
                                     BlockJacobiSmoother smoother);

struct SolveReport {
    Eigen::VectorXd solution;  // zero mean
    Index iterations = 0;
    bool converged = false;
    /// ||r_k|| / ||F|| for k = 0..iterations.
    std::vector<double> relative_residuals;
    /// sqrt(r_k^T z_k) for k = 0..iterations (last entry omitted on exit).
    std::vector<double> preconditioned_norms;

    double final_relative_residual() const {
        return relative_residuals.empty() ? 0.0 : relative_residuals.back();
    }
};

/// Preconditioned conjugate gradients for the singular no-flux system.
/// Every preconditioned residual is projected to zero mean before use.
/// Stops when ||r_k|| <= tol ||F||; exceeding maxit returns a report with
/// converged = false.
SolveReport pcg(const SparseOperator& a, const Eigen::VectorXd& f, const Preconditioner& m,
                double tol, Index maxit);

struct ErrorNormEstimate {
    double value = 0.0;     // last Ritz value
    double previous = 0.0;  // the one before
    Index iterations = 0;
    bool converged = false;
};

/// Power iteration for the A-norm of E = I - B^{-1} A on zero-mean vectors.
/// E is self-adjoint and nonnegative in the A inner product, so the
/// A-Rayleigh quotient of the iterate converges to ||E||_A from below.
/// Convergence is declared when successive Ritz values agree to 1e-6
/// relative (or both vanish); otherwise converged = false and the last two
/// values are reported.
ErrorNormEstimate estimate_error_norm(const SparseOperator& a, const Preconditioner& m,
                                      Index iterations);

/// Projects out the mean component in place.
void remove_mean(Eigen::VectorXd& v);

} // namespace gms
