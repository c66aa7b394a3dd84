#pragma once

#include "gmsnet/assembly.hpp"
#include "gmsnet/coeff.hpp"
#include "gmsnet/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <limits>
#include <vector>

namespace gms {

/// Basis of one coarse element's piece of the coarse space.
struct CoarseBlock {
    Index element = 0;
    /// (cells per element) x n_c, rows in tile row-major order.
    Eigen::MatrixXd basis;
    /// Local spectral eigenvalues, nondecreasing; empty unless the block came
    /// from the eigensolver.
    Eigen::VectorXd eigenvalues;
    /// lambda_{n_c + 1} - lambda_{n_c}; NaN when not available.
    double cut_gap = std::numeric_limits<double>::quiet_NaN();
};

/// Block-diagonal prolongation: block j acts on the fine cells of element j
/// and owns coarse columns [offset(j), offset(j) + cols_j).
class Prolongation {
public:
    Prolongation(TwoScaleMesh mesh, std::vector<CoarseBlock> blocks);

    const TwoScaleMesh& mesh() const { return mesh_; }
    const std::vector<CoarseBlock>& blocks() const { return blocks_; }
    const CoarseBlock& block(Index element) const { return blocks_[static_cast<std::size_t>(element)]; }
    Index fine_dim() const { return mesh_.fine_count(); }
    Index coarse_dim() const { return offsets_.back(); }
    Index column_offset(Index element) const { return offsets_[static_cast<std::size_t>(element)]; }

    /// Column-major sparse N x N^c matrix.
    Eigen::SparseMatrix<double> to_sparse() const;

    Eigen::VectorXd apply(const Eigen::VectorXd& coarse) const;
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& fine) const;

private:
    TwoScaleMesh mesh_;
    std::vector<CoarseBlock> blocks_;
    std::vector<Index> offsets_;
    std::vector<std::vector<Index>> cells_;
};

/// The n_c smallest eigenpairs of stiffness * phi = lambda * mass * phi,
/// computed from the symmetric matrix M^{-1/2} S M^{-1/2} with a dense
/// solver. Eigenvectors are mass-orthonormal and signed so that each
/// column's largest-magnitude entry (lowest index on ties) is positive.
CoarseBlock solve_lsp(const LocalPencil& pencil, Index n_c);

/// Per-element solve_lsp over all coarse elements, elements in index order.
Prolongation build_prolongation(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index n_c);

/// Mass weights kappa * hx * hy of one element (tile row-major).
Eigen::VectorXd element_weight(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index element);

} // namespace gms
