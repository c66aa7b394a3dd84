#pragma once

#include "gmsnet/errors.hpp"
#include "gmsnet/mesh.hpp"

#include <Eigen/Core>

namespace gms {

/// Cholesky failed on a weighted Gram matrix even after jitter.
class RankDeficiencyError : public NumericalError {
public:
    RankDeficiencyError(const std::string& what, Index pivot) : NumericalError(what), pivot_(pivot) {}
    Index pivot() const { return pivot_; }

private:
    Index pivot_;
};

/// Columns orthonormal in <u, v> = u^T diag(weight) v.
struct OrthonormalBlock {
    Eigen::MatrixXd basis;
    Eigen::VectorXd weight;
};

/// Whitens `block` against diag(weight): G = B^T W B = L L^T, T = B L^{-T}.
/// If the Cholesky factorization breaks down, 1e-12 * trace(G) / k is added
/// to the diagonal once. A second breakdown, or a jittered result whose
/// weighted Gram matrix is off the identity by more than 1e-6, throws
/// RankDeficiencyError with the failing pivot. A result that is off the
/// identity by more than 1e-12 gets one more whitening pass.
OrthonormalBlock orthonormalize(const Eigen::MatrixXd& block, const Eigen::VectorXd& weight);

/// Weighted subspace distance sqrt(k - ||T1^T W T2||_F^2) between the column
/// spans of two blocks with the same shape. Callers may pass raw blocks;
/// both are orthonormalized first.
double dist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& weight);

/// Same distance for blocks that are already orthonormal against the same
/// weight. The squared distance is evaluated as the weighted norm of the
/// residual b - T_a T_a^T W b, which equals k - ||T_a^T W T_b||_F^2 for
/// orthonormal inputs but keeps full relative accuracy when the spans
/// nearly coincide.
double dist(const OrthonormalBlock& a, const OrthonormalBlock& b);

} // namespace gms
