#include "gmsnet/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace gms {

namespace {

constexpr double kJitterAcceptance = 1e-6;
constexpr double kSecondPass = 1e-12;

// In-place lower Cholesky of a small SPD matrix. Returns the index of the
// first pivot that is not safely positive.
std::optional<Index> cholesky_lower(Eigen::MatrixXd& g) {
    const Index k = g.rows();
    for (Index j = 0; j < k; ++j) {
        double d = g(j, j);
        for (Index p = 0; p < j; ++p) d -= g(j, p) * g(j, p);
        if (!(d > 1e-14 * std::abs(g(j, j))) || !std::isfinite(d)) return j;
        const double ljj = std::sqrt(d);
        g(j, j) = ljj;
        for (Index i = j + 1; i < k; ++i) {
            double s = g(i, j);
            for (Index p = 0; p < j; ++p) s -= g(i, p) * g(j, p);
            g(i, j) = s / ljj;
        }
    }
    return std::nullopt;
}

void check_weight(const Eigen::VectorXd& weight, Index rows) {
    if (weight.size() != rows)
        throw ConfigError("weight has " + std::to_string(weight.size()) + " entries, block has " +
                          std::to_string(rows) + " rows");
    if (!(weight.array() > 0.0).all()) throw ConfigError("weight must be strictly positive");
}

} // namespace

OrthonormalBlock orthonormalize(const Eigen::MatrixXd& block, const Eigen::VectorXd& weight) {
    check_weight(weight, block.rows());
    const Index k = block.cols();
    if (k == 0) throw ConfigError("cannot orthonormalize an empty block");
    const Eigen::MatrixXd gram = block.transpose() * weight.asDiagonal() * block;
    Eigen::MatrixXd factor = gram;
    const auto pivot = cholesky_lower(factor);
    if (pivot) {
        factor = gram;
        factor.diagonal().array() += 1e-12 * gram.trace() / static_cast<double>(k);
        if (auto again = cholesky_lower(factor))
            throw RankDeficiencyError("block is numerically rank deficient (Cholesky pivot " +
                                          std::to_string(*again) + ")",
                                      *again);
    }
    // T = B L^{-T}  <=>  T L^T = B
    const Eigen::MatrixXd upper = factor.transpose();
    Eigen::MatrixXd basis = upper.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(block);
    Eigen::MatrixXd check = basis.transpose() * weight.asDiagonal() * basis;
    const double err = (check - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    if (pivot && !(err <= kJitterAcceptance)) {
        // The jitter always lets the factorization finish; accept the result
        // only if the whitened block is still orthonormal.
        throw RankDeficiencyError("block is numerically rank deficient (Cholesky pivot " +
                                      std::to_string(*pivot) + ", orthonormality error " +
                                      std::to_string(err) + " after jitter)",
                                  *pivot);
    }
    if (err > kSecondPass && !cholesky_lower(check)) {
        // Cholesky QR loses orthogonality like cond(B)^2; one more pass on
        // the nearly orthonormal result restores it.
        const Eigen::MatrixXd upper2 = check.transpose();
        basis = upper2.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(basis).eval();
    }
    return {std::move(basis), weight};
}

double dist(const OrthonormalBlock& a, const OrthonormalBlock& b) {
    if (a.basis.rows() != b.basis.rows() || a.basis.cols() != b.basis.cols())
        throw ConfigError("dist: block shapes differ (" + std::to_string(a.basis.rows()) + "x" +
                          std::to_string(a.basis.cols()) + " vs " +
                          std::to_string(b.basis.rows()) + "x" + std::to_string(b.basis.cols()) +
                          ")");
    const Eigen::MatrixXd cross = a.basis.transpose() * a.weight.asDiagonal() * b.basis;
    const Eigen::MatrixXd residual = b.basis - a.basis * cross;
    const double squared =
        (residual.array().square().colwise() * a.weight.array()).sum();
    const double k = static_cast<double>(a.basis.cols());
    return std::sqrt(std::clamp(squared, 0.0, k));
}

double dist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& weight) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ConfigError("dist: block shapes differ");
    return dist(orthonormalize(a, weight), orthonormalize(b, weight));
}

} // namespace gms
