#include "gmsnet/precond.hpp"

#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"
#include "gmsnet/rng.hpp"

#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace gms {

using ColSparse = Eigen::SparseMatrix<double>;
using BlockFactor = Eigen::SimplicialLDLT<ColSparse, Eigen::Lower, Eigen::AMDOrdering<int>>;

void remove_mean(Eigen::VectorXd& v) {
    if (v.size() > 0) v.array() -= v.mean();
}

struct BlockJacobiSmoother::Impl {
    std::vector<std::vector<Index>> cells;
    std::vector<ColSparse> blocks;
    std::vector<std::unique_ptr<BlockFactor>> factors;
};

namespace {

bool factor_is_spd(const BlockFactor& f) {
    if (f.info() != Eigen::Success) return false;
    const auto& d = f.vectorD();
    return d.minCoeff() > 1e-13 * d.cwiseAbs().maxCoeff();
}

} // namespace

BlockJacobiSmoother build_block_jacobi(const SparseOperator& a, const TwoScaleMesh& mesh) {
    if (a.rows() != mesh.fine_count() || a.cols() != mesh.fine_count())
        throw ConfigError("operator size does not match the mesh");
    auto impl = std::make_shared<BlockJacobiSmoother::Impl>();
    const auto n = static_cast<std::size_t>(mesh.coarse_count());
    impl->cells.resize(n);
    impl->blocks.resize(n);
    impl->factors.resize(n);

    parallel_for(n, [&](std::size_t j) {
        auto& cells = impl->cells[j];
        cells = mesh.element_cells(static_cast<Index>(j));
        std::vector<Eigen::Triplet<double>> entries;
        double max_diag = 0.0;
        double max_row_sum = 0.0;
        for (std::size_t r = 0; r < cells.size(); ++r) {
            double row_sum = 0.0;
            for (SparseOperator::InnerIterator it(a, cells[r]); it; ++it) {
                if (mesh.element_of(it.col()) != static_cast<Index>(j)) continue;
                entries.emplace_back(static_cast<Index>(r), mesh.local_index(it.col()), it.value());
                row_sum += it.value();
                if (it.col() == cells[r]) max_diag = std::max(max_diag, it.value());
            }
            max_row_sum = std::max(max_row_sum, row_sum);
        }
        const auto m = static_cast<Index>(cells.size());
        ColSparse block(m, m);
        block.setFromTriplets(entries.begin(), entries.end());
        if (max_row_sum <= 1e-12 * max_diag)
            throw NumericalError("block-Jacobi block " + std::to_string(j) +
                                 " is singular: the element has no coupling to the rest of the mesh");
        auto factor = std::make_unique<BlockFactor>(block);
        if (!factor_is_spd(*factor))
            throw NumericalError("block-Jacobi block " + std::to_string(j) +
                                 " is not symmetric positive definite");
        impl->blocks[j] = std::move(block);
        impl->factors[j] = std::move(factor);
    });
    return BlockJacobiSmoother(std::move(impl));
}

Eigen::VectorXd BlockJacobiSmoother::apply(const Eigen::VectorXd& r) const {
    Eigen::VectorXd out(r.size());
    parallel_for(impl_->cells.size(), [&](std::size_t j) {
        const auto& cells = impl_->cells[j];
        Eigen::VectorXd local(static_cast<Index>(cells.size()));
        for (std::size_t k = 0; k < cells.size(); ++k) local[static_cast<Index>(k)] = r[cells[k]];
        const Eigen::VectorXd sol = impl_->factors[j]->solve(local);
        for (std::size_t k = 0; k < cells.size(); ++k) out[cells[k]] = sol[static_cast<Index>(k)];
    });
    return out;
}

Index BlockJacobiSmoother::block_count() const { return static_cast<Index>(impl_->cells.size()); }

Eigen::MatrixXd BlockJacobiSmoother::block_matrix(Index element) const {
    return Eigen::MatrixXd(impl_->blocks.at(static_cast<std::size_t>(element)));
}

struct TwoGridPreconditioner::CoarseFactor {
    BlockFactor ldlt;
};

TwoGridPreconditioner::TwoGridPreconditioner(SparseOperator a, const Prolongation& p,
                                             BlockJacobiSmoother smoother)
    : a_(std::move(a)), p_(p.to_sparse()), smoother_(std::move(smoother)) {
    if (a_.rows() != p.fine_dim())
        throw ConfigError("prolongation has " + std::to_string(p.fine_dim()) +
                          " rows, operator has " + std::to_string(a_.rows()));

    // Coarse coefficients of the constant vector, element by element.
    kernel_ = Eigen::VectorXd::Zero(p.coarse_dim());
    double residual2 = 0.0;
    for (const auto& block : p.blocks()) {
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(block.basis.rows());
        const Eigen::VectorXd c = block.basis.colPivHouseholderQr().solve(ones);
        residual2 += (block.basis * c - ones).squaredNorm();
        kernel_.segment(p.column_offset(block.element), c.size()) = c;
    }
    const double rel = std::sqrt(residual2 / static_cast<double>(p.fine_dim()));
    if (!(rel <= 1e-10)) {
        std::ostringstream msg;
        msg << "kernel condition violated: the constant vector is not in the range of the "
               "prolongation (relative residual "
            << rel << ")";
        throw ContractError(msg.str());
    }

    const ColSparse a_col = a_;
    ColSparse coarse = ColSparse(p_.transpose()) * a_col * p_;
    coarse_ = 0.5 * (coarse + ColSparse(coarse.transpose()));
    coarse_.prune(0.0);

    const Index nc = p.coarse_dim();
    Eigen::VectorXd score(nc);
    for (Index i = 0; i < nc; ++i) score[i] = std::abs(kernel_[i]) * p_.col(i).norm();
    const double best = score.maxCoeff();
    pinned_ = 0;
    for (Index i = 0; i < nc; ++i)
        if (score[i] >= 0.5 * best) pinned_ = i;

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(coarse_.nonZeros()));
    for (Index col = 0; col < coarse_.outerSize(); ++col)
        for (ColSparse::InnerIterator it(coarse_, col); it; ++it) {
            if (it.row() == pinned_ || it.col() == pinned_) continue;
            entries.emplace_back(it.row() - (it.row() > pinned_), it.col() - (it.col() > pinned_),
                                 it.value());
        }
    ColSparse reduced(nc - 1, nc - 1);
    reduced.setFromTriplets(entries.begin(), entries.end());
    auto factor = std::make_shared<CoarseFactor>();
    if (nc > 1) {
        factor->ldlt.compute(reduced);
        if (!factor_is_spd(factor->ldlt))
            throw NumericalError("coarse operator with pinned degree of freedom " +
                                 std::to_string(pinned_) + " is not positive definite");
    }
    factor_ = std::move(factor);
}

Eigen::VectorXd TwoGridPreconditioner::coarse_solve(const Eigen::VectorXd& b) const {
    const Index nc = b.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nc);
    if (nc <= 1) return x;
    Eigen::VectorXd reduced(nc - 1);
    reduced.head(pinned_) = b.head(pinned_);
    reduced.tail(nc - 1 - pinned_) = b.tail(nc - 1 - pinned_);
    const Eigen::VectorXd sol = factor_->ldlt.solve(reduced);
    x.head(pinned_) = sol.head(pinned_);
    x.tail(nc - 1 - pinned_) = sol.tail(nc - 1 - pinned_);
    return x;
}

Eigen::VectorXd TwoGridPreconditioner::apply(const Eigen::VectorXd& r) const {
    Eigen::VectorXd w = smoother_.apply(r);
    Eigen::VectorXd t = r - a_ * w;
    w += p_ * coarse_solve(p_.transpose() * t);
    t = r - a_ * w;
    return w + smoother_.apply(t);
}

TwoGridPreconditioner build_two_grid(const SparseOperator& a, const Prolongation& p,
                                     BlockJacobiSmoother smoother) {
    if (smoother.block_count() != p.mesh().coarse_count())
        throw ConfigError("smoother and prolongation use different coarse grids");
    return TwoGridPreconditioner(a, p, std::move(smoother));
}

SolveReport pcg(const SparseOperator& a, const Eigen::VectorXd& f, const Preconditioner& m,
                double tol, Index maxit) {
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    if (f.size() != a.rows()) throw ConfigError("right-hand side size does not match operator");
    SolveReport report;
    report.solution = Eigen::VectorXd::Zero(f.size());
    const double fnorm = f.norm();
    report.relative_residuals.push_back(fnorm == 0.0 ? 0.0 : 1.0);
    if (fnorm == 0.0) {
        report.converged = true;
        return report;
    }

    Eigen::VectorXd& x = report.solution;
    Eigen::VectorXd r = f;
    Eigen::VectorXd z = m.apply(r);
    remove_mean(z);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    report.preconditioned_norms.push_back(std::sqrt(std::max(rz, 0.0)));

    for (Index k = 1; k <= maxit; ++k) {
        const Eigen::VectorXd q = a * p;
        const double pq = p.dot(q);
        if (!(pq > 0.0)) break;  // breakdown: search direction in the kernel
        const double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        report.iterations = k;
        const double rel = r.norm() / fnorm;
        report.relative_residuals.push_back(rel);
        if (rel <= tol) {
            report.converged = true;
            break;
        }
        z = m.apply(r);
        remove_mean(z);
        const double rz_next = r.dot(z);
        report.preconditioned_norms.push_back(std::sqrt(std::max(rz_next, 0.0)));
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    remove_mean(x);
    return report;
}

namespace {

double a_norm(const SparseOperator& a, const Eigen::VectorXd& v) {
    return std::sqrt(std::max(v.dot(a * v), 0.0));
}

} // namespace

ErrorNormEstimate estimate_error_norm(const SparseOperator& a, const Preconditioner& m,
                                      Index iterations) {
    if (iterations < 1) throw ConfigError("power iteration needs at least one step");
    Rng rng(20240917);
    Eigen::VectorXd v(a.rows());
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    remove_mean(v);
    v /= a_norm(a, v);

    ErrorNormEstimate est;
    for (Index k = 1; k <= iterations; ++k) {
        Eigen::VectorXd av = a * v;
        Eigen::VectorXd w = v - m.apply(av);
        remove_mean(w);
        est.previous = est.value;
        est.value = w.dot(av);  // <E v, v>_A with ||v||_A = 1
        est.iterations = k;
        const double norm = a_norm(a, w);
        if (norm <= 1e-300) {
            est.value = 0.0;
            est.converged = true;
            return est;
        }
        v = w / norm;
    }
    const double scale = std::max(std::abs(est.value), std::abs(est.previous));
    est.converged = scale < 1e-12 || std::abs(est.value - est.previous) <= 1e-6 * scale;
    return est;
}

} // namespace gms
