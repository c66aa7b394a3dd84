#pragma once

#include "gmsnet/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace gms {

/// Strictly positive permeability per fine cell, row-major over the mesh.
class CoefficientField {
public:
    CoefficientField(TwoScaleMesh mesh, Eigen::VectorXd values);

    static CoefficientField constant(const TwoScaleMesh& mesh, double value);

    const TwoScaleMesh& mesh() const { return mesh_; }
    const Eigen::VectorXd& values() const { return values_; }
    double operator[](Index cell) const { return values_[cell]; }

    double min() const { return values_.minCoeff(); }
    double max() const { return values_.maxCoeff(); }
    double contrast() const { return max() / min(); }

    /// Values of one coarse element in tile row-major order.
    Eigen::VectorXd element_values(Index element) const;

private:
    TwoScaleMesh mesh_;
    Eigen::VectorXd values_;
};

/// Log-Gaussian field with exponential covariance
///   C(x, y) = sigma2 * exp(-sqrt((x1-y1)^2/eta1^2 + (x2-y2)^2/eta2^2)),
/// truncated to `modes` Karhunen-Loeve terms.
struct GaussianFieldSpec {
    double sigma2 = 2.0;
    double eta1 = 0.1;
    double eta2 = 0.1;
    Index modes = 0;  // 0 selects every mode (N)

    void validate(Index fine_count) const;
};

struct DiskFieldSpec {
    Index n_disks = 15;
    double kappa_b = 1e4;
    double kappa_r = 1.0;
    double radius_min = 0.02;
    double radius_max = 0.08;
    std::int64_t max_attempts = 100000;

    void validate() const;
};

double exponential_covariance(const GaussianFieldSpec& spec, double dx, double dy);

/// Dense covariance matrix collocated at fine-cell centres. Only intended for
/// small meshes.
Eigen::MatrixXd covariance_matrix(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec);

/// Truncated Karhunen-Loeve representation of the field's logarithm on a
/// fixed mesh. Construction performs the eigendecomposition once; sampling
/// is then a matrix-vector product per seed.
///
/// The discrete eigenproblem is the midpoint collocation of the covariance
/// operator with cell-area weights. On a uniform grid the weighted operator
/// is h^2 C, so the stored modes are the unit eigenvectors of C and
/// Z = sum_a w_a sqrt(eig_a) v_a has covariance C when every mode is kept.
/// Small grids use a dense eigensolver; larger ones a subspace iteration
/// whose matrix-vector product is an FFT convolution with the kernel table.
class GaussianFieldSampler {
public:
    GaussianFieldSampler(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec);

    const TwoScaleMesh& mesh() const { return mesh_; }
    const GaussianFieldSpec& spec() const { return spec_; }
    Index modes() const { return eigenvalues_.size(); }
    /// Nonincreasing.
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }

    /// Z = log(kappa) for the given standard-normal weights (one per mode).
    Eigen::VectorXd log_field(const Eigen::VectorXd& weights) const;
    CoefficientField sample(std::uint64_t seed) const;

private:
    TwoScaleMesh mesh_;
    GaussianFieldSpec spec_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
};

CoefficientField sample_log_gaussian(const TwoScaleMesh& mesh, const GaussianFieldSpec& spec,
                                     std::uint64_t seed);

struct Disk {
    double x;
    double y;
    double radius;
};

/// Rejection sampling of pairwise non-overlapping disks lying inside the unit
/// square. Per attempt: radius ~ U[radius_min, radius_max], then centre ~
/// U[r, 1-r]^2; rejected if it overlaps an accepted disk.
std::vector<Disk> place_disks(const DiskFieldSpec& spec, std::uint64_t seed);

/// kappa_b fully inside, kappa_r fully outside, otherwise the area-weighted
/// harmonic mean. Coverage is estimated from a 4x4 grid of sub-cell
/// midpoints.
CoefficientField rasterize_disks(const TwoScaleMesh& mesh, const std::vector<Disk>& disks,
                                 double kappa_b, double kappa_r);

/// 1 / (fraction / kappa_b + (1 - fraction) / kappa_r).
double harmonic_cell_value(double fraction_inside, double kappa_b, double kappa_r);

CoefficientField sample_random_disks(const TwoScaleMesh& mesh, const DiskFieldSpec& spec,
                                     std::uint64_t seed);

} // namespace gms
