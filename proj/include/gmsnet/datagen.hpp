#pragma once

#include "gmsnet/coeff.hpp"
#include "gmsnet/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace gms {

/// One training pair: an m x m coefficient tile (row-major) and the
/// eigenvectors 2..n_c of its local spectral problem, weighted-orthonormal
/// and free of the constant.
struct DatasetRecord {
    Index m = 0;
    Eigen::VectorXd kappa;
    Eigen::MatrixXd label;

    Index n_basis() const { return label.cols(); }
};

/// Non-constant local spectral basis of an m x m tile with square cells of
/// side h, made exactly orthogonal to the constant in the kappa h^2 inner
/// product and orthonormal in it.
Eigen::MatrixXd tile_labels(const Eigen::VectorXd& tile, Index m, double h, Index n_c);

/// One record per coarse element, in element order. Needs square elements
/// and square cells.
std::vector<DatasetRecord> extract_records(const TwoScaleMesh& mesh, const CoefficientField& kappa,
                                           Index n_c);

enum class Symmetry { RowFlip, ColumnFlip, Transpose, AntiTranspose };

inline constexpr Symmetry kSymmetries[] = {Symmetry::RowFlip, Symmetry::ColumnFlip, Symmetry::Transpose,
                                           Symmetry::AntiTranspose};

/// Grid transform of a row-major mx-by-my array (row y, column x):
///   RowFlip (y, x) -> (my-1-y, x), ColumnFlip (y, x) -> (y, mx-1-x),
///   Transpose (y, x) -> (x, y), AntiTranspose (y, x) -> (mx-1-x, my-1-y).
/// The diagonal transforms need mx == my.
Eigen::VectorXd transform_tile(const Eigen::VectorXd& values, Index mx, Index my, Symmetry t);

DatasetRecord transform_record(const DatasetRecord& record, Symmetry t);

/// The four transformed records, labels moved with the tile rather than
/// recomputed. The original is not included.
std::vector<DatasetRecord> symmetry_augment(const DatasetRecord& record);

/// Empirical Karhunen-Loeve model of Z = log(kappa) over tiles.
struct KLModel {
    Index m = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd eigenvalues;  // nonincreasing, >= 0
    Eigen::MatrixXd modes;        // m^2 x l, orthonormal columns

    Index truncation() const { return eigenvalues.size(); }
};

/// Mean and (1/count) covariance of the log tiles, top-l eigenpairs.
/// Eigenvalues down to -1e-12 * m^2 * max(1, mu_max) are clipped to zero;
/// anything more negative is a NumericalError.
KLModel fit_kl(const std::vector<Eigen::VectorXd>& tiles, Index m, Index l);

/// exp(mean + sum_a omega_a sqrt(mu_a) f_a).
Eigen::VectorXd kl_tile(const KLModel& model, const Eigen::VectorXd& omega);

/// `count` tiles with omega drawn tile by tile, mode by mode, from Rng(seed).
std::vector<Eigen::VectorXd> kl_augment(const KLModel& model, Index count, std::uint64_t seed);

/// Dataset file, little-endian: "MSDS", u32 version 1, u32 m, u32 n_basis,
/// u64 count; per record m^2 float64 kappa, n_basis columns of m^2 float64,
/// then the CRC32 of those record bytes.
void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);
void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);

struct DatasetHeader {
    Index m = 0;
    Index n_basis = 0;
    std::uint64_t count = 0;
};

/// Checks magic, version, the optional expected (m, n_basis), each record's
/// CRC, and label invariants: L^T diag(kappa) L a positive multiple of the
/// identity and every column orthogonal to the constant, both to 1e-10
/// relative. The cell size is not stored, hence the scale-free check.
std::vector<DatasetRecord> read_dataset(std::istream& in, std::optional<DatasetHeader> expected = {});
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path,
                                        std::optional<DatasetHeader> expected = {});
DatasetHeader read_dataset_header(std::istream& in);

/// Coefficient field stored as a single-record dataset with n_basis = 0
/// (square meshes only).
void write_field(const CoefficientField& kappa, const std::filesystem::path& path);
CoefficientField read_field(const std::filesystem::path& path, Index cx, Index cy);

} // namespace gms
