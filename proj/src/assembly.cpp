#include "gmsnet/assembly.hpp"

#include "gmsnet/errors.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace gms {

double edge_permeability(double kappa_minus, double kappa_plus) {
    return 2.0 / (1.0 / kappa_minus + 1.0 / kappa_plus);
}

double transmissibility(const TwoScaleMesh& mesh, const Edge& edge, const CoefficientField& kappa) {
    return edge_permeability(kappa[edge.minus], kappa[edge.plus]) * edge.length * edge.length /
           mesh.cell_area();
}

namespace {

void check_field(const TwoScaleMesh& mesh, const CoefficientField& kappa) {
    if (!(kappa.mesh() == mesh))
        throw ConfigError("coefficient field was built on a different mesh");
}

} // namespace

SparseOperator assemble_tpfa(const TwoScaleMesh& mesh, const CoefficientField& kappa) {
    check_field(mesh, kappa);
    const EdgeSet edges = interior_edges(mesh);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(4 * edges.size());
    for (const Edge& e : edges) {
        const double t = transmissibility(mesh, e, kappa);
        entries.emplace_back(e.minus, e.minus, t);
        entries.emplace_back(e.plus, e.plus, t);
        entries.emplace_back(e.minus, e.plus, -t);
        entries.emplace_back(e.plus, e.minus, -t);
    }
    SparseOperator a(mesh.fine_count(), mesh.fine_count());
    a.setFromTriplets(entries.begin(), entries.end());
    a.makeCompressed();
    return a;
}

Eigen::VectorXd assemble_source(const TwoScaleMesh& mesh, SourcePattern pattern) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.fine_count());
    if (pattern == SourcePattern::Corners) {
        const Index right = mesh.nx() - 1;
        const Index top = mesh.ny() - 1;
        f[mesh.cell(0, 0)] += -1.0;
        f[mesh.cell(right, top)] += -1.0;
        f[mesh.cell(0, top)] += 1.0;
        f[mesh.cell(right, 0)] += 1.0;
    }
    return f;
}

Eigen::VectorXd assemble_source(const TwoScaleMesh& mesh, const Eigen::VectorXd& custom) {
    if (custom.size() != mesh.fine_count())
        throw ConfigError("source has " + std::to_string(custom.size()) + " entries, mesh has " +
                          std::to_string(mesh.fine_count()) + " cells");
    const double total = custom.sum();
    if (std::abs(total) > 1e-12 * custom.lpNorm<1>())
        throw ConfigError("source is incompatible with the no-flux boundary: sum = " +
                          std::to_string(total));
    return custom;
}

LocalPencil tile_pencil(const Eigen::VectorXd& tile, Index mx, Index my, double hx, double hy) {
    if (tile.size() != mx * my)
        throw ConfigError("tile has " + std::to_string(tile.size()) + " values, expected " +
                          std::to_string(mx * my));
    for (Index k = 0; k < tile.size(); ++k)
        if (!(tile[k] > 0.0) || !std::isfinite(tile[k]))
            throw ConfigError("tile coefficient " + std::to_string(k) + " is not positive");
    const Index n = mx * my;
    LocalPencil pencil{Eigen::MatrixXd::Zero(n, n), tile * (hx * hy)};
    auto add = [&](Index p, Index q, double length) {
        const double t = edge_permeability(tile[p], tile[q]) * length * length / (hx * hy);
        pencil.stiffness(p, p) += t;
        pencil.stiffness(q, q) += t;
        pencil.stiffness(p, q) -= t;
        pencil.stiffness(q, p) -= t;
    };
    for (Index j = 0; j < my; ++j)
        for (Index i = 0; i + 1 < mx; ++i) add(j * mx + i, j * mx + i + 1, hy);
    for (Index j = 0; j + 1 < my; ++j)
        for (Index i = 0; i < mx; ++i) add(j * mx + i, (j + 1) * mx + i, hx);
    return pencil;
}

LocalPencil local_pencil(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index element) {
    check_field(mesh, kappa);
    return tile_pencil(kappa.element_values(element), mesh.mx(), mesh.my(), mesh.hx(), mesh.hy());
}

void write_coordinate_text(std::ostream& out, const SparseOperator& a) {
    const auto old_precision = out.precision();
    out << std::setprecision(17);
    for (Index r = 0; r < a.outerSize(); ++r)
        for (SparseOperator::InnerIterator it(a, r); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    out.precision(old_precision);
}

} // namespace gms
