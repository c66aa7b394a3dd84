#include <doctest.h>

#include "gmsnet/assembly.hpp"
#include "gmsnet/datagen.hpp"
#include "gmsnet/errors.hpp"
#include "gmsnet/rng.hpp"
#include "gmsnet/subspace.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace gms;

namespace {

Eigen::VectorXd random_tile(Rng& rng, Index m) {
    Eigen::VectorXd t(m * m);
    for (auto& v : t) v = std::exp(2.0 * rng.normal());
    return t;
}

std::string to_bytes(const std::vector<DatasetRecord>& records) {
    std::ostringstream out;
    write_dataset(out, records);
    return out.str();
}

std::vector<DatasetRecord> from_bytes(const std::string& bytes, std::optional<DatasetHeader> expected = {}) {
    std::istringstream in(bytes);
    return read_dataset(in, expected);
}

std::string error_of(const std::string& bytes, std::optional<DatasetHeader> expected = {}) {
    try {
        from_bytes(bytes, expected);
    } catch (const FormatError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("records follow the coarse grid and drop the constant") {
    const auto mesh = build_mesh(32, 32, 4, 4);
    const auto kappa = sample_random_disks(mesh, DiskFieldSpec{}, 2);
    const auto records = extract_records(mesh, kappa, 5);
    REQUIRE(records.size() == 16);
    for (std::size_t j = 0; j < records.size(); ++j) {
        const auto& r = records[j];
        CHECK(r.m == 8);
        CHECK(r.n_basis() == 4);
        CHECK(r.kappa == kappa.element_values(static_cast<Index>(j)));
        const Eigen::VectorXd w = r.kappa * mesh.cell_area();
        const Eigen::MatrixXd gram = r.label.transpose() * w.asDiagonal() * r.label;
        CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((r.label.transpose() * w).cwiseAbs().maxCoeff() / std::sqrt(w.sum()) < 1e-10);
    }
    CHECK_THROWS_AS(extract_records(build_mesh(32, 16, 4, 4), CoefficientField::constant(build_mesh(32, 16, 4, 4), 1.0), 3),
                    ConfigError);
}

TEST_CASE("uniform tile labels match the dense Laplacian pencil") {
    const Index m = 6;
    const double h = 1.0 / 24;
    const Eigen::VectorXd tile = Eigen::VectorXd::Ones(m * m);
    const auto pencil = tile_pencil(tile, m, m, h, h);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ref(pencil.stiffness, Eigen::MatrixXd(pencil.mass.asDiagonal()));
    // the uniform spectrum has pairs; four modes end before the next pair
    const auto& lam = ref.eigenvalues();
    CHECK(lam[3] < lam[4] * (1 - 1e-8));
    const Eigen::MatrixXd label = tile_labels(tile, m, h, 4);
    CHECK(dist(label, ref.eigenvectors().middleCols(1, 3), pencil.mass) < 1e-8);
}

TEST_CASE("labels depend only on the tile") {
    const auto mesh = build_mesh(16, 16, 2, 2);
    Eigen::VectorXd v(256);
    Rng rng(1);
    const Eigen::VectorXd tile = random_tile(rng, 8);
    for (Index e = 0; e < 4; ++e) {
        const auto cells = mesh.element_cells(e);
        for (std::size_t k = 0; k < cells.size(); ++k) v[cells[k]] = tile[static_cast<Index>(k)];
    }
    const auto records = extract_records(mesh, CoefficientField(mesh, v), 4);
    for (std::size_t j = 1; j < 4; ++j) CHECK((records[j].label - records[0].label).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grid transforms") {
    // 3 wide, 2 high:   row 0: 0 1 2 / row 1: 3 4 5
    Eigen::VectorXd v(6);
    v << 0, 1, 2, 3, 4, 5;
    Eigen::VectorXd rf(6), cf(6);
    rf << 3, 4, 5, 0, 1, 2;
    cf << 2, 1, 0, 5, 4, 3;
    CHECK(transform_tile(v, 3, 2, Symmetry::RowFlip) == rf);
    CHECK(transform_tile(v, 3, 2, Symmetry::ColumnFlip) == cf);
    CHECK_THROWS_AS(transform_tile(v, 3, 2, Symmetry::Transpose), ConfigError);
    CHECK_THROWS_AS(transform_tile(v, 3, 2, Symmetry::AntiTranspose), ConfigError);

    Eigen::VectorXd s(4), tr(4), at(4);
    s << 0, 1, 2, 3;  // [[0, 1], [2, 3]]
    tr << 0, 2, 1, 3;
    at << 3, 1, 2, 0;
    CHECK(transform_tile(s, 2, 2, Symmetry::Transpose) == tr);
    CHECK(transform_tile(s, 2, 2, Symmetry::AntiTranspose) == at);

    Rng rng(2);
    const Eigen::VectorXd t = random_tile(rng, 5);
    for (Symmetry sym : kSymmetries) CHECK(transform_tile(transform_tile(t, 5, 5, sym), 5, 5, sym) == t);
}

TEST_CASE("transformed labels solve the transformed problem") {
    Rng rng(3);
    const Index m = 8;
    const double h = 1.0 / 64;
    for (int trial = 0; trial < 10; ++trial) {
        DatasetRecord r;
        r.m = m;
        r.kappa = random_tile(rng, m);
        r.label = tile_labels(r.kappa, m, h, 4);
        const auto augmented = symmetry_augment(r);
        REQUIRE(augmented.size() == 4);
        for (const auto& a : augmented) {
            const Eigen::MatrixXd fresh = tile_labels(a.kappa, m, h, 4);
            CHECK(dist(a.label, fresh, a.kappa * h * h) < 1e-8);
        }
        const auto twice = transform_record(transform_record(r, Symmetry::RowFlip), Symmetry::RowFlip);
        CHECK(twice.kappa == r.kappa);
        CHECK(twice.label == r.label);
    }
}

TEST_CASE("fit_kl basic properties") {
    Rng rng(4);
    const Eigen::VectorXd tile = random_tile(rng, 3);
    const auto same = fit_kl({tile, tile, tile}, 3, 9);
    CHECK(same.eigenvalues.cwiseAbs().maxCoeff() < 1e-28);
    CHECK((same.mean - Eigen::VectorXd(tile.array().log())).cwiseAbs().maxCoeff() < 1e-15);

    const auto two = fit_kl({random_tile(rng, 3), random_tile(rng, 3)}, 3, 9);
    CHECK(two.eigenvalues[0] > 0.0);
    CHECK(two.eigenvalues.tail(8).cwiseAbs().maxCoeff() < 1e-12 * two.eigenvalues[0]);

    std::vector<Eigen::VectorXd> many;
    for (int s = 0; s < 50; ++s) many.push_back(random_tile(rng, 3));
    const auto model = fit_kl(many, 3, 5);
    CHECK(model.truncation() == 5);
    CHECK(model.eigenvalues.minCoeff() >= 0.0);
    for (Index k = 1; k < 5; ++k) CHECK(model.eigenvalues[k] <= model.eigenvalues[k - 1]);
    CHECK((model.modes.transpose() * model.modes - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(fit_kl({tile}, 3, 1), ConfigError);
    CHECK_THROWS_AS(fit_kl(many, 3, 10), ConfigError);
    Eigen::VectorXd bad = tile;
    bad[2] = 0.0;
    CHECK_THROWS_AS(fit_kl({tile, bad}, 3, 2), ConfigError);
}

TEST_CASE("kl_augment") {
    Rng rng(5);
    std::vector<Eigen::VectorXd> tiles;
    for (int s = 0; s < 30; ++s) tiles.push_back(random_tile(rng, 4));
    const auto model = fit_kl(tiles, 4, 16);
    CHECK(kl_tile(model, Eigen::VectorXd::Zero(16)) == Eigen::VectorXd(model.mean.array().exp()));
    const auto a = kl_augment(model, 5, 9);
    const auto b = kl_augment(model, 5, 9);
    REQUIRE(a.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(a[k] == b[k]);
        CHECK((a[k].array() > 0.0).all());
    }
}

TEST_CASE("dataset round trip and corruption") {
    const auto mesh = build_mesh(16, 16, 2, 2);
    const auto records = extract_records(mesh, sample_random_disks(mesh, DiskFieldSpec{}, 5), 3);
    const std::string bytes = to_bytes(records);
    CHECK(bytes.size() == 24 + 4 * (64 * 3 * 8 + 4));
    const auto back = from_bytes(bytes, DatasetHeader{8, 2, 4});
    REQUIRE(back.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::memcmp(back[k].kappa.data(), records[k].kappa.data(), 64 * 8) == 0);
        CHECK(std::memcmp(back[k].label.data(), records[k].label.data(), 128 * 8) == 0);
    }
    CHECK(to_bytes(back) == bytes);

    const std::size_t record_size = 64 * 3 * 8 + 4;
    for (std::size_t rec = 0; rec < 4; ++rec) {
        std::string bad = bytes;
        bad[24 + rec * record_size + 100] ^= 0x10;
        CHECK(error_of(bad) == "checksum mismatch at record " + std::to_string(rec));
    }
    CHECK(error_of(bytes, DatasetHeader{8, 3, 0}).find("n_basis=2") != std::string::npos);
    CHECK(error_of(bytes, DatasetHeader{16, 2, 0}).find("expected (m=16") != std::string::npos);
    CHECK(error_of(bytes.substr(0, bytes.size() - 10)).find("truncated while reading record 3") != std::string::npos);
    std::string magic = bytes;
    magic[3] = 'W';
    CHECK(error_of(magic).find("magic") != std::string::npos);
}

TEST_CASE("label invariants are rechecked on read") {
    const auto mesh = build_mesh(16, 16, 2, 2);
    auto records = extract_records(mesh, sample_random_disks(mesh, DiskFieldSpec{}, 6), 3);
    records[2].label.col(1) += 1e-3 * records[2].label.col(0);
    CHECK(error_of(to_bytes(records)).find("record 2: label is not weighted-orthonormal") != std::string::npos);
    records = extract_records(mesh, sample_random_disks(mesh, DiskFieldSpec{}, 6), 3);
    records[1].label.col(0).array() += 1e-3;
    CHECK(error_of(to_bytes(records)).find("record 1") != std::string::npos);
}

TEST_CASE("high-contrast labels stay free of the constant") {
    const auto mesh = build_mesh(32, 32, 2, 2);
    DiskFieldSpec spec;
    spec.kappa_b = 1e5;
    for (const auto& r : extract_records(mesh, sample_random_disks(mesh, spec, 10), 5)) {
        const Eigen::VectorXd w = r.kappa * mesh.cell_area();
        CHECK((r.label.transpose() * w).cwiseAbs().maxCoeff() / std::sqrt(w.sum()) < 1e-13);
        const Eigen::MatrixXd gram = r.label.transpose() * w.asDiagonal() * r.label;
        CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
    }
}
