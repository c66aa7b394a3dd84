#include "gmsnet/datagen.hpp"

#include "gmsnet/assembly.hpp"
#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"
#include "gmsnet/rng.hpp"
#include "gmsnet/spectral.hpp"
#include "gmsnet/subspace.hpp"

#include <Eigen/Eigenvalues>
#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace gms {

Eigen::MatrixXd tile_labels(const Eigen::VectorXd& tile, Index m, double h, Index n_c) {
    if (n_c < 2) throw ConfigError("labels need n_c >= 2");
    const auto block = solve_lsp(tile_pencil(tile, m, m, h, h), n_c);
    // At high contrast the computed eigenvectors keep a roundoff-sized
    // constant component; remove it and restore weighted orthonormality.
    const Eigen::VectorXd w = tile * (h * h);
    Eigen::MatrixXd labels = block.basis.rightCols(n_c - 1);
    labels.rowwise() -= (w.transpose() * labels) / w.sum();
    return orthonormalize(labels, w).basis;
}

std::vector<DatasetRecord> extract_records(const TwoScaleMesh& mesh, const CoefficientField& kappa, Index n_c) {
    if (mesh.mx() != mesh.my() || mesh.nx() != mesh.ny())
        throw ConfigError("records need square coarse elements and square cells");
    if (n_c < 2 || n_c > mesh.cells_per_element())
        throw ConfigError("n_c=" + std::to_string(n_c) + " outside [2, " + std::to_string(mesh.cells_per_element()) + "]");
    std::vector<DatasetRecord> records(static_cast<std::size_t>(mesh.coarse_count()));
    parallel_for(records.size(), [&](std::size_t j) {
        auto& r = records[j];
        r.m = mesh.mx();
        r.kappa = kappa.element_values(static_cast<Index>(j));
        r.label = tile_labels(r.kappa, r.m, mesh.hx(), n_c);
    });
    return records;
}

Eigen::VectorXd transform_tile(const Eigen::VectorXd& values, Index mx, Index my, Symmetry t) {
    if (values.size() != mx * my) throw ConfigError("tile size does not match its dimensions");
    if ((t == Symmetry::Transpose || t == Symmetry::AntiTranspose) && mx != my)
        throw ConfigError("diagonal symmetry needs a square tile, got " + std::to_string(mx) + "x" + std::to_string(my));
    Eigen::VectorXd out(values.size());
    for (Index y = 0; y < my; ++y)
        for (Index x = 0; x < mx; ++x) {
            Index ty = y, tx = x;
            switch (t) {
            case Symmetry::RowFlip: ty = my - 1 - y; break;
            case Symmetry::ColumnFlip: tx = mx - 1 - x; break;
            case Symmetry::Transpose: ty = x; tx = y; break;
            case Symmetry::AntiTranspose: ty = mx - 1 - x; tx = my - 1 - y; break;
            }
            out[ty * mx + tx] = values[y * mx + x];
        }
    return out;
}

DatasetRecord transform_record(const DatasetRecord& record, Symmetry t) {
    DatasetRecord out;
    out.m = record.m;
    out.kappa = transform_tile(record.kappa, record.m, record.m, t);
    out.label.resize(record.label.rows(), record.label.cols());
    for (Index c = 0; c < record.label.cols(); ++c)
        out.label.col(c) = transform_tile(record.label.col(c), record.m, record.m, t);
    return out;
}

std::vector<DatasetRecord> symmetry_augment(const DatasetRecord& record) {
    std::vector<DatasetRecord> out;
    for (Symmetry t : kSymmetries) out.push_back(transform_record(record, t));
    return out;
}

// ------------------------------------------------------------------------ KL

KLModel fit_kl(const std::vector<Eigen::VectorXd>& tiles, Index m, Index l) {
    const Index d = m * m;
    if (tiles.size() < 2) throw ConfigError("fit_kl needs at least two tiles");
    if (l < 1 || l > d) throw ConfigError("truncation l=" + std::to_string(l) + " outside [1, " + std::to_string(d) + "]");
    Eigen::MatrixXd z(d, static_cast<Index>(tiles.size()));
    for (std::size_t s = 0; s < tiles.size(); ++s) {
        const auto& t = tiles[s];
        if (t.size() != d) throw ConfigError("tile " + std::to_string(s) + " has the wrong size");
        if (!(t.array() > 0.0).all() || !t.allFinite())
            throw ConfigError("tile " + std::to_string(s) + " has a nonpositive or non-finite entry");
        z.col(static_cast<Index>(s)) = t.array().log();
    }
    KLModel model;
    model.m = m;
    model.mean = z.rowwise().mean();
    const Eigen::MatrixXd centred = z.colwise() - model.mean;
    const Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(tiles.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("empirical covariance eigensolver did not converge");
    Eigen::VectorXd mu = eig.eigenvalues().reverse().head(l);
    const double tol = 1e-12 * static_cast<double>(d) * std::max(1.0, mu[0]);
    for (Index k = 0; k < l; ++k) {
        if (mu[k] < -tol)
            throw NumericalError("empirical covariance eigenvalue " + std::to_string(k) + " = " +
                                 std::to_string(mu[k]) + " is negative beyond tolerance");
        mu[k] = std::max(mu[k], 0.0);
    }
    model.eigenvalues = mu;
    model.modes = eig.eigenvectors().rowwise().reverse().leftCols(l);
    return model;
}

Eigen::VectorXd kl_tile(const KLModel& model, const Eigen::VectorXd& omega) {
    if (omega.size() != model.truncation())
        throw ConfigError("expected " + std::to_string(model.truncation()) + " KL weights");
    const Eigen::VectorXd coeff = omega.array() * model.eigenvalues.array().sqrt();
    return (model.mean + model.modes * coeff).array().exp();
}

std::vector<Eigen::VectorXd> kl_augment(const KLModel& model, Index count, std::uint64_t seed) {
    if (count < 0) throw ConfigError("negative augmentation count");
    Rng rng(seed);
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    Eigen::VectorXd omega(model.truncation());
    for (Index s = 0; s < count; ++s) {
        for (auto& w : omega) w = rng.normal();
        out.push_back(kl_tile(model, omega));
    }
    return out;
}

// -------------------------------------------------------------------- format

namespace {

constexpr std::array<char, 4> kMagic{'M', 'S', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::string& buf, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<char>((v >> s) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) buf.push_back(static_cast<char>((v >> s) & 0xff));
}

void append_f64(std::string& buf, double v) { append_u64(buf, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t load_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = v << 8 | p[k];
    return v;
}

std::uint32_t load_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("truncated while reading " + what);
}

void check_label(const DatasetRecord& r, std::uint64_t index) {
    const std::string where = "record " + std::to_string(index);
    if (!r.kappa.allFinite() || !(r.kappa.array() > 0.0).all())
        throw FormatError(where + ": coefficient tile has a nonpositive or non-finite entry");
    if (r.n_basis() == 0) return;
    if (!r.label.allFinite()) throw FormatError(where + ": label has a non-finite entry");
    const Eigen::MatrixXd gram = r.label.transpose() * r.kappa.asDiagonal() * r.label;
    const double scale = gram.diagonal().mean();
    if (!(scale > 0.0)) throw FormatError(where + ": label columns vanish");
    const double err = (gram / scale - Eigen::MatrixXd::Identity(r.n_basis(), r.n_basis())).cwiseAbs().maxCoeff();
    if (!(err <= 1e-10))
        throw FormatError(where + ": label is not weighted-orthonormal (deviation " + std::to_string(err) + ")");
    const double mass = r.kappa.sum();
    const Eigen::VectorXd overlap = (r.label.transpose() * r.kappa) / std::sqrt(mass * scale);
    if (!(overlap.cwiseAbs().maxCoeff() <= 1e-10))
        throw FormatError(where + ": label has a constant component (" + std::to_string(overlap.cwiseAbs().maxCoeff()) + ")");
}

} // namespace

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
    const Index m = records.empty() ? 0 : records.front().m;
    const Index nb = records.empty() ? 0 : records.front().n_basis();
    std::string header(kMagic.begin(), kMagic.end());
    append_u32(header, kVersion);
    append_u32(header, static_cast<std::uint32_t>(m));
    append_u32(header, static_cast<std::uint32_t>(nb));
    append_u64(header, records.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::string buf;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        if (r.m != m || r.n_basis() != nb || r.kappa.size() != m * m || (nb > 0 && r.label.rows() != m * m))
            throw ConfigError("record " + std::to_string(k) + " does not share the dataset shape (m=" +
                              std::to_string(m) + ", n_basis=" + std::to_string(nb) + ")");
        buf.clear();
        for (Index i = 0; i < r.kappa.size(); ++i) append_f64(buf, r.kappa[i]);
        for (Index c = 0; c < nb; ++c)
            for (Index i = 0; i < m * m; ++i) append_f64(buf, r.label(i, c));
        append_u32(buf, crc_of(buf));
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw Error("dataset write failed");
}

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write dataset " + path.string());
    write_dataset(out, records);
}

DatasetHeader read_dataset_header(std::istream& in) {
    std::array<unsigned char, 24> h{};
    read_exact(in, h.data(), h.size(), "dataset header");
    if (!std::equal(kMagic.begin(), kMagic.end(), h.begin())) throw FormatError("bad magic: not a dataset file");
    const auto version = load_u32(h.data() + 4);
    if (version != kVersion) throw FormatError("unsupported dataset format version " + std::to_string(version));
    DatasetHeader out;
    out.m = load_u32(h.data() + 8);
    out.n_basis = load_u32(h.data() + 12);
    out.count = load_u64(h.data() + 16);
    if (out.m == 0 && out.count > 0) throw FormatError("dataset header declares m = 0");
    if (out.n_basis > out.m * out.m) throw FormatError("dataset header declares more basis columns than cells");
    return out;
}

std::vector<DatasetRecord> read_dataset(std::istream& in, std::optional<DatasetHeader> expected) {
    const auto header = read_dataset_header(in);
    if (expected && (expected->m != header.m || expected->n_basis != header.n_basis))
        throw FormatError("dataset header has (m=" + std::to_string(header.m) + ", n_basis=" +
                          std::to_string(header.n_basis) + "), expected (m=" + std::to_string(expected->m) +
                          ", n_basis=" + std::to_string(expected->n_basis) + ")");
    const Index d = header.m * header.m;
    const std::size_t payload = static_cast<std::size_t>(d * (1 + header.n_basis)) * 8;
    std::vector<unsigned char> buf(payload + 4);
    std::vector<DatasetRecord> records;
    for (std::uint64_t k = 0; k < header.count; ++k) {
        read_exact(in, buf.data(), buf.size(), "record " + std::to_string(k) + " of " + std::to_string(header.count));
        const auto stored = load_u32(buf.data() + payload);
        const auto actual = static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(payload)));
        if (stored != actual) throw FormatError("checksum mismatch at record " + std::to_string(k));
        DatasetRecord r;
        r.m = header.m;
        r.kappa.resize(d);
        r.label.resize(d, header.n_basis);
        const unsigned char* p = buf.data();
        for (Index i = 0; i < d; ++i, p += 8) r.kappa[i] = std::bit_cast<double>(load_u64(p));
        for (Index c = 0; c < header.n_basis; ++c)
            for (Index i = 0; i < d; ++i, p += 8) r.label(i, c) = std::bit_cast<double>(load_u64(p));
        check_label(r, k);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path, std::optional<DatasetHeader> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    try {
        return read_dataset(in, expected);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_field(const CoefficientField& kappa, const std::filesystem::path& path) {
    const auto& mesh = kappa.mesh();
    if (mesh.nx() != mesh.ny()) throw ConfigError("field files hold square meshes only");
    DatasetRecord r;
    r.m = mesh.nx();
    r.kappa = kappa.values();
    r.label.resize(r.m * r.m, 0);
    write_dataset({r}, path);
}

CoefficientField read_field(const std::filesystem::path& path, Index cx, Index cy) {
    const auto records = read_dataset(path);
    if (records.size() != 1 || records.front().n_basis() != 0)
        throw FormatError(path.string() + ": not a field file (expected one record without basis columns)");
    const auto& r = records.front();
    return CoefficientField(build_mesh(r.m, r.m, cx, cy), r.kappa);
}

} // namespace gms
