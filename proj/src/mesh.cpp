#include "gmsnet/mesh.hpp"

#include "gmsnet/errors.hpp"

#include <string>

namespace gms {

TwoScaleMesh::TwoScaleMesh(Index nx, Index ny, Index cx, Index cy)
    : nx_(nx), ny_(ny), cx_(cx), cy_(cy) {
    if (nx <= 0 || ny <= 0 || cx <= 0 || cy <= 0)
        throw ConfigError("mesh sizes must be positive (nx=" + std::to_string(nx) +
                          ", ny=" + std::to_string(ny) + ", cx=" + std::to_string(cx) +
                          ", cy=" + std::to_string(cy) + ")");
    if (nx % cx != 0)
        throw ConfigError("nx=" + std::to_string(nx) + " is not divisible by cx=" +
                          std::to_string(cx));
    if (ny % cy != 0)
        throw ConfigError("ny=" + std::to_string(ny) + " is not divisible by cy=" +
                          std::to_string(cy));
}

Index TwoScaleMesh::element_of(Index c) const {
    const Index i = c % nx_;
    const Index j = c / nx_;
    return (j / my()) * cx_ + i / mx();
}

Index TwoScaleMesh::local_index(Index c) const {
    const Index i = c % nx_;
    const Index j = c / nx_;
    return (j % my()) * mx() + i % mx();
}

std::vector<Index> TwoScaleMesh::element_cells(Index element) const {
    if (element < 0 || element >= coarse_count())
        throw ConfigError("coarse element index " + std::to_string(element) +
                          " out of range [0, " + std::to_string(coarse_count()) + ")");
    const Index i0 = (element % cx_) * mx();
    const Index j0 = (element / cx_) * my();
    std::vector<Index> cells;
    cells.reserve(static_cast<std::size_t>(cells_per_element()));
    for (Index lj = 0; lj < my(); ++lj)
        for (Index li = 0; li < mx(); ++li) cells.push_back(cell(i0 + li, j0 + lj));
    return cells;
}

TwoScaleMesh build_mesh(Index nx, Index ny, Index cx, Index cy) {
    return TwoScaleMesh(nx, ny, cx, cy);
}

namespace {

// Shared enumeration over the rectangle [i0, i1) x [j0, j1) of fine cells.
EdgeSet edges_in_box(const TwoScaleMesh& mesh, Index i0, Index i1, Index j0, Index j1) {
    EdgeSet edges;
    const Index w = i1 - i0;
    const Index h = j1 - j0;
    edges.reserve(static_cast<std::size_t>((w - 1) * h + w * (h - 1)));
    for (Index j = j0; j < j1; ++j)
        for (Index i = i0; i + 1 < i1; ++i)
            edges.push_back({mesh.cell(i, j), mesh.cell(i + 1, j), EdgeOrientation::Vertical,
                             mesh.hy()});
    for (Index j = j0; j + 1 < j1; ++j)
        for (Index i = i0; i < i1; ++i)
            edges.push_back({mesh.cell(i, j), mesh.cell(i, j + 1), EdgeOrientation::Horizontal,
                             mesh.hx()});
    return edges;
}

} // namespace

EdgeSet interior_edges(const TwoScaleMesh& mesh) {
    return edges_in_box(mesh, 0, mesh.nx(), 0, mesh.ny());
}

EdgeSet element_edges(const TwoScaleMesh& mesh, Index element) {
    if (element < 0 || element >= mesh.coarse_count())
        throw ConfigError("coarse element index " + std::to_string(element) +
                          " out of range [0, " + std::to_string(mesh.coarse_count()) + ")");
    const Index i0 = (element % mesh.cx()) * mesh.mx();
    const Index j0 = (element / mesh.cx()) * mesh.my();
    return edges_in_box(mesh, i0, i0 + mesh.mx(), j0, j0 + mesh.my());
}

} // namespace gms
