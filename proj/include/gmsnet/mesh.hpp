#pragma once

#include <cstddef>
#include <vector>

namespace gms {

using Index = std::ptrdiff_t;

enum class EdgeOrientation { Vertical, Horizontal };

/// Interior edge between two edge-adjacent fine cells. `minus` is the left
/// (vertical edge) or lower (horizontal edge) neighbour.
struct Edge {
    Index minus;
    Index plus;
    EdgeOrientation orientation;
    double length;
};

using EdgeSet = std::vector<Edge>;

/// Uniform fine/coarse quadrilateral grid pair on the unit square.
///
/// Fine cells are numbered row-major, cell (i, j) -> j * nx + i with i the
/// x-index and j the y-index (j = 0 is the bottom row). Coarse elements are
/// numbered the same way on the cx-by-cy coarse grid, and element J owns the
/// mx-by-my tile of fine cells beneath it.
class TwoScaleMesh {
public:
    TwoScaleMesh(Index nx, Index ny, Index cx, Index cy);

    Index nx() const { return nx_; }
    Index ny() const { return ny_; }
    Index cx() const { return cx_; }
    Index cy() const { return cy_; }
    Index mx() const { return nx_ / cx_; }
    Index my() const { return ny_ / cy_; }
    double hx() const { return 1.0 / static_cast<double>(nx_); }
    double hy() const { return 1.0 / static_cast<double>(ny_); }
    double cell_area() const { return hx() * hy(); }

    Index fine_count() const { return nx_ * ny_; }
    Index coarse_count() const { return cx_ * cy_; }
    Index cells_per_element() const { return mx() * my(); }

    Index cell(Index i, Index j) const { return j * nx_ + i; }
    Index element_of(Index cell) const;
    /// Position of `cell` inside its element's tile, row-major over the tile.
    Index local_index(Index cell) const;
    /// Global fine-cell indices of element `element`, in local (tile row-major) order.
    std::vector<Index> element_cells(Index element) const;

    bool operator==(const TwoScaleMesh&) const = default;

private:
    Index nx_, ny_, cx_, cy_;
};

TwoScaleMesh build_mesh(Index nx, Index ny, Index cx, Index cy);

/// All interior edges: vertical edges row-major, then horizontal edges
/// row-major. Boundary edges carry no flux and are excluded.
EdgeSet interior_edges(const TwoScaleMesh& mesh);

/// Interior edges whose both neighbours lie inside coarse element `element`,
/// in the same relative order as interior_edges.
EdgeSet element_edges(const TwoScaleMesh& mesh, Index element);

} // namespace gms
