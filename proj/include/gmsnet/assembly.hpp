#pragma once

#include "gmsnet/coeff.hpp"
#include "gmsnet/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>

namespace gms {

/// Symmetric sparse operator in compressed-row layout, column indices sorted.
using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Harmonic average kappa_e = 2 / (1/kappa_minus + 1/kappa_plus).
double edge_permeability(double kappa_minus, double kappa_plus);

/// kappa_e |e|^2 / (hx hy).
double transmissibility(const TwoScaleMesh& mesh, const Edge& edge, const CoefficientField& kappa);

/// Two-point flux operator with no-flux boundary: each interior edge adds
/// +t_e to both diagonal entries and -t_e to the off-diagonal pair.
SparseOperator assemble_tpfa(const TwoScaleMesh& mesh, const CoefficientField& kappa);

enum class SourcePattern {
    /// +1 in the top-left and bottom-right cells, -1 in the bottom-left and
    /// top-right cells.
    Corners,
    Zero,
};

Eigen::VectorXd assemble_source(const TwoScaleMesh& mesh, SourcePattern pattern);

/// Accepts a per-cell right-hand side only if it sums to zero within
/// 1e-12 * ||F||_1, as required by the pure no-flux problem.
Eigen::VectorXd assemble_source(const TwoScaleMesh& mesh, const Eigen::VectorXd& custom);

/// Pair of local forms on one coarse element, indexed in tile row-major order.
struct LocalPencil {
    Eigen::MatrixXd stiffness;  // TPFA restricted to the element's own edges
    Eigen::VectorXd mass;       // kappa * hx * hy per cell
};

LocalPencil local_pencil(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index element);

/// Tile-level pencil for an m-by-m (or mx-by-my) coefficient array with
/// the given cell sizes. Used for tiles that are not attached to a mesh.
LocalPencil tile_pencil(const Eigen::VectorXd& tile, Index mx, Index my, double hx, double hy);

/// One `row col value` line per stored entry, 17 significant digits.
void write_coordinate_text(std::ostream& out, const SparseOperator& a);

} // namespace gms
