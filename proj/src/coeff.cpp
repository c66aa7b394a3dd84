#include "gmsnet/coeff.hpp"

#include "gmsnet/errors.hpp"
#include "gmsnet/rng.hpp"

#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <string>
#include <tuple>
#include <utility>

namespace gms {

CoefficientField::CoefficientField(TwoScaleMesh mesh, Eigen::VectorXd values)
    : mesh_(mesh), values_(std::move(values)) {
    if (values_.size() != mesh_.fine_count())
        throw ConfigError("coefficient field has " + std::to_string(values_.size()) +
                          " values, mesh has " + std::to_string(mesh_.fine_count()) + " cells");
    for (Index c = 0; c < values_.size(); ++c)
        if (!(values_[c] > 0.0) || !std::isfinite(values_[c]))
            throw ConfigError("coefficient at cell " + std::to_string(c) +
                              " is not positive and finite: " + std::to_string(values_[c]));
}

CoefficientField CoefficientField::constant(const TwoScaleMesh& mesh, double value) {
    return CoefficientField(mesh, Eigen::VectorXd::Constant(mesh.fine_count(), value));
}

Eigen::VectorXd CoefficientField::element_values(Index element) const {
    const auto cells = mesh_.element_cells(element);
    Eigen::VectorXd out(static_cast<Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) out[static_cast<Index>(k)] = values_[cells[k]];
    return out;
}

void GaussianFieldSpec::validate(Index fine_count) const {
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
        throw ConfigError("sigma2 must be nonnegative, got " + std::to_string(sigma2));
    if (!(eta1 > 0.0) || !(eta2 > 0.0))
        throw ConfigError("correlation lengths must be positive");
    if (modes < 0 || modes > fine_count)
        throw ConfigError("KL truncation " + std::to_string(modes) + " outside [1, " +
                          std::to_string(fine_count) + "]");
}

void DiskFieldSpec::validate() const {
    if (n_disks < 0) throw ConfigError("n_disks must be nonnegative");
    if (!(kappa_b > 0.0) || !(kappa_r > 0.0) || !std::isfinite(kappa_b) || !std::isfinite(kappa_r))
        throw ConfigError("disk and background permeabilities must be positive");
    if (!(radius_min > 0.0) || radius_min > radius_max || !(radius_max < 0.5))
        throw ConfigError("disk radii must satisfy 0 < radius_min <= radius_max < 0.5");
    if (max_attempts <= 0) throw ConfigError("max_attempts must be positive");
}

double exponential_covariance(const GaussianFieldSpec& spec, double dx, double dy) {
    const double a = dx / spec.eta1;
    const double b = dy / spec.eta2;
    return spec.sigma2 * std::exp(-std::sqrt(a * a + b * b));
}

Eigen::MatrixXd covariance_matrix(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec) {
    const Index n = mesh.fine_count();
    Eigen::MatrixXd c(n, n);
    for (Index p = 0; p < n; ++p) {
        const Index ip = p % mesh.nx(), jp = p / mesh.nx();
        for (Index q = 0; q <= p; ++q) {
            const Index iq = q % mesh.nx(), jq = q / mesh.nx();
            const double v = exponential_covariance(spec, static_cast<double>(ip - iq) * mesh.hx(),
                                                    static_cast<double>(jp - jq) * mesh.hy());
            c(p, q) = v;
            c(q, p) = v;
        }
    }
    return c;
}

namespace {

// Covariance matvec as a linear convolution, evaluated through a circulant
// embedding on a (2 nx) x (2 ny) periodic grid.
class CovarianceConvolution {
public:
    CovarianceConvolution(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec)
        : nx_(mesh.nx()), ny_(mesh.ny()), px_(2 * nx_), py_(2 * ny_), pxh_(px_ / 2 + 1),
          real_(static_cast<std::size_t>(px_ * py_)),
          spectrum_(static_cast<std::size_t>(pxh_ * py_)),
          kernel_(static_cast<std::size_t>(pxh_ * py_)) {
        auto* re = real_.data();
        auto* sp = reinterpret_cast<fftw_complex*>(spectrum_.data());
        forward_ = fftw_plan_dft_r2c_2d(static_cast<int>(py_), static_cast<int>(px_), re, sp,
                                        FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_c2r_2d(static_cast<int>(py_), static_cast<int>(px_), sp, re,
                                         FFTW_ESTIMATE);
        for (Index b = 0; b < py_; ++b)
            for (Index a = 0; a < px_; ++a) {
                const Index da = std::min(a, px_ - a);
                const Index db = std::min(b, py_ - b);
                real_[static_cast<std::size_t>(b * px_ + a)] = exponential_covariance(
                    spec, static_cast<double>(da) * mesh.hx(), static_cast<double>(db) * mesh.hy());
            }
        fftw_execute(forward_);
        const double scale = 1.0 / static_cast<double>(px_ * py_);
        for (std::size_t k = 0; k < kernel_.size(); ++k) kernel_[k] = spectrum_[k] * scale;
    }

    ~CovarianceConvolution() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    CovarianceConvolution(const CovarianceConvolution&) = delete;
    CovarianceConvolution& operator=(const CovarianceConvolution&) = delete;

    void apply(const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
        out.resize(in.rows(), in.cols());
        for (Index col = 0; col < in.cols(); ++col) {
            std::fill(real_.begin(), real_.end(), 0.0);
            for (Index j = 0; j < ny_; ++j)
                for (Index i = 0; i < nx_; ++i)
                    real_[static_cast<std::size_t>(j * px_ + i)] = in(j * nx_ + i, col);
            fftw_execute(forward_);
            for (std::size_t k = 0; k < spectrum_.size(); ++k) spectrum_[k] *= kernel_[k];
            fftw_execute(backward_);
            for (Index j = 0; j < ny_; ++j)
                for (Index i = 0; i < nx_; ++i)
                    out(j * nx_ + i, col) = real_[static_cast<std::size_t>(j * px_ + i)];
        }
    }

private:
    Index nx_, ny_, px_, py_, pxh_;
    std::vector<double> real_;
    std::vector<std::complex<double>> spectrum_;
    std::vector<std::complex<double>> kernel_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

void fix_signs(Eigen::MatrixXd& vectors) {
    for (Index k = 0; k < vectors.cols(); ++k) {
        Index arg = 0;
        vectors.col(k).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, k) < 0.0) vectors.col(k) = -vectors.col(k);
    }
}

constexpr Index kDenseLimit = 1600;
constexpr Index kDenseMax = 4096;
constexpr double kResidualTol = 1e-9;

// Lanczos with full reorthogonalization on the FFT covariance product.
// Every few steps the tridiagonal matrix is diagonalized and the run stops
// once the residual estimate |beta_m s_{m,k}| of each wanted Ritz pair is
// below kResidualTol * mu_max.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> lanczos_modes(const TwoScaleMesh& mesh,
                                                         const GaussianFieldSpec& spec,
                                                         Index modes) {
    const Index n = mesh.fine_count();
    const Index cap = std::min(n, 3 * modes + 100);
    CovarianceConvolution cov(mesh, spec);
    Eigen::MatrixXd basis(n, cap);
    std::vector<double> alpha, beta;
    Rng rng(0x6b6c2d73756273ULL);
    Eigen::VectorXd v(n);
    for (Index r = 0; r < n; ++r) v[r] = rng.normal();
    basis.col(0) = v / v.norm();

    Eigen::MatrixXd in(n, 1), out;
    for (Index m = 0;; ++m) {
        in.col(0) = basis.col(m);
        cov.apply(in, out);
        Eigen::VectorXd w = out.col(0);
        alpha.push_back(basis.col(m).dot(w));
        for (int pass = 0; pass < 2; ++pass)
            w -= basis.leftCols(m + 1) * (basis.leftCols(m + 1).transpose() * w);
        const double b = w.norm();
        const Index size = m + 1;
        const bool full = size == cap || b == 0.0;
        if (size >= modes && (size % 10 == 0 || full)) {
            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(size, size);
            for (Index i = 0; i < size; ++i) {
                t(i, i) = alpha[static_cast<std::size_t>(i)];
                if (i + 1 < size) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
            if (eig.info() != Eigen::Success)
                throw NumericalError("covariance Lanczos eigensolver did not converge");
            const Eigen::VectorXd ritz = eig.eigenvalues().reverse();
            const Eigen::MatrixXd s = eig.eigenvectors().rowwise().reverse();
            const double scale = std::max(ritz[0], std::numeric_limits<double>::min());
            double worst = 0.0;
            for (Index k = 0; k < modes; ++k) worst = std::max(worst, std::abs(b * s(size - 1, k)));
            worst /= scale;
            if (worst <= kResidualTol || b == 0.0)
                return {ritz.head(modes), basis.leftCols(size) * s.leftCols(modes)};
            if (full)
                throw NumericalError("covariance Lanczos iteration did not converge in " +
                                     std::to_string(cap) + " steps (relative residual " +
                                     std::to_string(worst) + ")");
        }
        if (b == 0.0)
            throw NumericalError("covariance Lanczos iteration broke down after " +
                                 std::to_string(size) + " steps");
        beta.push_back(b);
        basis.col(m + 1) = w / b;
    }
}

} // namespace

GaussianFieldSampler::GaussianFieldSampler(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec)
    : mesh_(mesh), spec_(spec) {
    const Index n = mesh.fine_count();
    spec.validate(n);
    const Index modes = spec.modes == 0 ? n : spec.modes;
    spec_.modes = modes;
    if (spec.sigma2 == 0.0) {
        eigenvalues_ = Eigen::VectorXd::Zero(modes);
        eigenvectors_ = Eigen::MatrixXd::Identity(n, modes);
        return;
    }

    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    if (n <= kDenseLimit || 3 * modes + 100 > n) {
        if (n > kDenseMax)
            throw ConfigError("KL truncation " + std::to_string(modes) + " on " +
                              std::to_string(n) + " cells needs a dense eigensolve; reduce the "
                              "mode count or the mesh");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance_matrix(mesh, spec));
        if (eig.info() != Eigen::Success)
            throw NumericalError("covariance eigensolver did not converge");
        values = eig.eigenvalues().reverse().head(modes);
        vectors = eig.eigenvectors().rowwise().reverse().leftCols(modes);
    } else {
        std::tie(values, vectors) = lanczos_modes(mesh, spec, modes);
    }

    const double tol = 1e-10 * std::max(1.0, values.maxCoeff());
    for (Index k = 0; k < values.size(); ++k) {
        if (values[k] < -tol)
            throw NumericalError("covariance matrix is not positive semidefinite: eigenvalue " +
                                 std::to_string(k) + " = " + std::to_string(values[k]));
        values[k] = std::max(values[k], 0.0);
    }
    fix_signs(vectors);
    eigenvalues_ = std::move(values);
    eigenvectors_ = std::move(vectors);
}

Eigen::VectorXd GaussianFieldSampler::log_field(const Eigen::VectorXd& weights) const {
    if (weights.size() != modes())
        throw ConfigError("expected " + std::to_string(modes()) + " KL weights, got " +
                          std::to_string(weights.size()));
    return eigenvectors_ * (weights.array() * eigenvalues_.array().sqrt()).matrix();
}

CoefficientField GaussianFieldSampler::sample(std::uint64_t seed) const {
    Rng rng(seed);
    Eigen::VectorXd weights(modes());
    for (Index k = 0; k < modes(); ++k) weights[k] = rng.normal();
    return CoefficientField(mesh_, log_field(weights).array().exp().matrix());
}

CoefficientField sample_log_gaussian(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec,
                                     std::uint64_t seed) {
    return GaussianFieldSampler(mesh, spec).sample(seed);
}

std::vector<Disk> place_disks(const DiskFieldSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::vector<Disk> disks;
    disks.reserve(static_cast<std::size_t>(spec.n_disks));
    std::int64_t attempts = 0;
    while (static_cast<Index>(disks.size()) < spec.n_disks) {
        if (attempts++ >= spec.max_attempts)
            throw ConfigError("disk placement infeasible: placed " + std::to_string(disks.size()) +
                              " of " + std::to_string(spec.n_disks) + " disks in " +
                              std::to_string(spec.max_attempts) + " attempts");
        const double r = rng.uniform(spec.radius_min, spec.radius_max);
        const Disk d{rng.uniform(r, 1.0 - r), rng.uniform(r, 1.0 - r), r};
        const bool overlaps = std::any_of(disks.begin(), disks.end(), [&](const Disk& o) {
            return std::hypot(d.x - o.x, d.y - o.y) < d.radius + o.radius;
        });
        if (!overlaps) disks.push_back(d);
    }
    return disks;
}

double harmonic_cell_value(double fraction_inside, double kappa_b, double kappa_r) {
    return 1.0 / (fraction_inside / kappa_b + (1.0 - fraction_inside) / kappa_r);
}

CoefficientField rasterize_disks(const TwoScaleMesh& mesh, const std::vector<Disk>& disks,
                                 double kappa_b, double kappa_r) {
    constexpr int sub = 4;
    Eigen::VectorXd values(mesh.fine_count());
    const double hx = mesh.hx(), hy = mesh.hy();
    for (Index j = 0; j < mesh.ny(); ++j)
        for (Index i = 0; i < mesh.nx(); ++i) {
            const double x0 = static_cast<double>(i) * hx;
            const double y0 = static_cast<double>(j) * hy;
            int inside = 0;
            for (int sj = 0; sj < sub; ++sj)
                for (int si = 0; si < sub; ++si) {
                    const double x = x0 + (si + 0.5) * hx / sub;
                    const double y = y0 + (sj + 0.5) * hy / sub;
                    for (const Disk& d : disks)
                        if ((x - d.x) * (x - d.x) + (y - d.y) * (y - d.y) <= d.radius * d.radius) {
                            ++inside;
                            break;
                        }
                }
            double v;
            if (inside == sub * sub) v = kappa_b;
            else if (inside == 0) v = kappa_r;
            else v = harmonic_cell_value(static_cast<double>(inside) / (sub * sub), kappa_b, kappa_r);
            values[mesh.cell(i, j)] = v;
        }
    return CoefficientField(mesh, std::move(values));
}

CoefficientField sample_random_disks(const TwoScaleMesh& mesh, const DiskFieldSpec& spec,
                                     std::uint64_t seed) {
    return rasterize_disks(mesh, place_disks(spec, seed), spec.kappa_b, spec.kappa_r);
}

} // namespace gms
