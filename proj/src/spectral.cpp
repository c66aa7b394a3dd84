#include "gmsnet/spectral.hpp"

#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>
#include <string>

namespace gms {

Prolongation::Prolongation(TwoScaleMesh mesh, std::vector<CoarseBlock> blocks)
    : mesh_(mesh), blocks_(std::move(blocks)) {
    if (static_cast<Index>(blocks_.size()) != mesh_.coarse_count())
        throw ConfigError("prolongation needs " + std::to_string(mesh_.coarse_count()) +
                          " blocks, got " + std::to_string(blocks_.size()));
    offsets_.reserve(blocks_.size() + 1);
    offsets_.push_back(0);
    cells_.reserve(blocks_.size());
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const auto& b = blocks_[j];
        if (b.basis.rows() != mesh_.cells_per_element() || b.basis.cols() < 1)
            throw ConfigError("block " + std::to_string(j) + " has shape " +
                              std::to_string(b.basis.rows()) + "x" + std::to_string(b.basis.cols()) +
                              ", expected " + std::to_string(mesh_.cells_per_element()) + "xk, k>=1");
        offsets_.push_back(offsets_.back() + b.basis.cols());
        cells_.push_back(mesh_.element_cells(static_cast<Index>(j)));
    }
}

Eigen::SparseMatrix<double> Prolongation::to_sparse() const {
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(fine_dim()) * blocks_.front().basis.cols());
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const auto& basis = blocks_[j].basis;
        for (Index c = 0; c < basis.cols(); ++c)
            for (Index r = 0; r < basis.rows(); ++r)
                entries.emplace_back(cells_[j][static_cast<std::size_t>(r)], offsets_[j] + c,
                                     basis(r, c));
    }
    Eigen::SparseMatrix<double> p(fine_dim(), coarse_dim());
    p.setFromTriplets(entries.begin(), entries.end());
    return p;
}

Eigen::VectorXd Prolongation::apply(const Eigen::VectorXd& coarse) const {
    Eigen::VectorXd fine(fine_dim());
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const auto& basis = blocks_[j].basis;
        const Eigen::VectorXd local = basis * coarse.segment(offsets_[j], basis.cols());
        for (Index r = 0; r < local.size(); ++r) fine[cells_[j][static_cast<std::size_t>(r)]] = local[r];
    }
    return fine;
}

Eigen::VectorXd Prolongation::apply_transpose(const Eigen::VectorXd& fine) const {
    Eigen::VectorXd coarse(coarse_dim());
    Eigen::VectorXd local(mesh_.cells_per_element());
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const auto& basis = blocks_[j].basis;
        for (Index r = 0; r < local.size(); ++r) local[r] = fine[cells_[j][static_cast<std::size_t>(r)]];
        coarse.segment(offsets_[j], basis.cols()) = basis.transpose() * local;
    }
    return coarse;
}

CoarseBlock solve_lsp(const LocalPencil& pencil, Index n_c) {
    const Index n = pencil.mass.size();
    if (pencil.stiffness.rows() != n || pencil.stiffness.cols() != n)
        throw ConfigError("pencil stiffness and mass sizes differ");
    if (n_c < 1 || n_c > n)
        throw ConfigError("n_c=" + std::to_string(n_c) + " outside [1, " + std::to_string(n) + "]");
    if (!(pencil.mass.array() > 0.0).all()) throw ConfigError("mass must be strictly positive");

    const Eigen::VectorXd inv_sqrt = pencil.mass.array().rsqrt();
    const Eigen::MatrixXd similar = inv_sqrt.asDiagonal() * pencil.stiffness * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(similar);
    if (eig.info() != Eigen::Success) {
        const Eigen::MatrixXd& v = eig.eigenvectors();
        const Eigen::MatrixXd res = similar * v - v * eig.eigenvalues().asDiagonal();
        std::ostringstream msg;
        msg << "local spectral eigensolver did not converge; residual norms:";
        for (Index k = 0; k < std::min<Index>(n_c, n); ++k) msg << ' ' << res.col(k).norm();
        throw NumericalError(msg.str());
    }

    CoarseBlock block;
    block.eigenvalues = eig.eigenvalues().head(n_c).cwiseMax(0.0);
    block.basis = inv_sqrt.asDiagonal() * eig.eigenvectors().leftCols(n_c);
    if (n_c < n) block.cut_gap = eig.eigenvalues()[n_c] - eig.eigenvalues()[n_c - 1];
    for (Index k = 0; k < n_c; ++k) {
        auto col = block.basis.col(k);
        Index arg = 0;
        double best = -1.0;
        for (Index r = 0; r < n; ++r)
            if (std::abs(col[r]) > best) {
                best = std::abs(col[r]);
                arg = r;
            }
        if (col[arg] < 0.0) col = -col;
    }
    return block;
}

Eigen::VectorXd element_weight(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index element) {
    return kappa.element_values(element) * mesh.cell_area();
}

Prolongation build_prolongation(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index n_c) {
    if (n_c < 1 || n_c > mesh.cells_per_element())
        throw ConfigError("n_c=" + std::to_string(n_c) + " outside [1, " +
                          std::to_string(mesh.cells_per_element()) + "]");
    std::vector<CoarseBlock> blocks(static_cast<std::size_t>(mesh.coarse_count()));
    parallel_for(blocks.size(), [&](std::size_t j) {
        const auto element = static_cast<Index>(j);
        try {
            blocks[j] = solve_lsp(local_pencil(mesh, kappa, element), n_c);
        } catch (const NumericalError& e) {
            throw NumericalError("coarse element " + std::to_string(j) + ": " + e.what());
        }
        blocks[j].element = element;
    });
    return Prolongation(mesh, std::move(blocks));
}

} // namespace gms
