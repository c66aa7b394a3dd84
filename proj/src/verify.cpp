#include "gmsnet/verify.hpp"

#include "gmsnet/assembly.hpp"
#include "gmsnet/datagen.hpp"
#include "gmsnet/errors.hpp"
#include "gmsnet/rng.hpp"
#include "gmsnet/spectral.hpp"
#include "gmsnet/subspace.hpp"
#include "gmsnet/surrogate.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>

namespace gms {

namespace {

Eigen::MatrixXd normal_matrix(Rng& rng, Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

Eigen::VectorXd positive_vector(Rng& rng, Index n) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = std::exp(rng.normal());
    return v;
}

// Orthogonal projector onto W^{1/2} span(a), built from a Householder QR.
Eigen::MatrixXd weighted_projector(const Eigen::MatrixXd& a, const Eigen::VectorXd& w) {
    const Eigen::MatrixXd scaled = w.cwiseSqrt().asDiagonal() * a;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    return q * q.transpose();
}

std::string format(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

CheckResult metric_axioms(Rng& rng) {
    double worst_sym = 0.0, worst_tri = -std::numeric_limits<double>::infinity(), worst_self = 0.0, worst_proj = 0.0;
    bool negative = false;
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd w = positive_vector(rng, 64);
        const auto p = normal_matrix(rng, 64, 5), q = normal_matrix(rng, 64, 5), r = normal_matrix(rng, 64, 5);
        const double pq = dist(p, q, w), qp = dist(q, p, w), qr = dist(q, r, w), pr = dist(p, r, w);
        worst_sym = std::max(worst_sym, std::abs(pq - qp));
        worst_tri = std::max(worst_tri, pr - pq - qr);
        worst_self = std::max(worst_self, dist(p, p, w));
        negative = negative || pq < 0.0;
        const double oracle = (weighted_projector(p, w) - weighted_projector(q, w)).norm() / std::sqrt(2.0);
        worst_proj = std::max(worst_proj, std::abs(pq - oracle));
    }
    const bool ok = worst_sym <= 1e-12 && worst_tri <= 1e-9 && worst_self < 1e-12 && !negative && worst_proj <= 1e-9;
    return {"distance metric axioms", ok,
            "symmetry " + format(worst_sym) + ", triangle slack " + format(worst_tri) + ", self " +
                format(worst_self) + ", projector " + format(worst_proj)};
}

CheckResult recombination(Rng& rng) {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const Eigen::VectorXd w = positive_vector(rng, 64);
        const auto p = normal_matrix(rng, 64, 5), q = normal_matrix(rng, 64, 5);
        Eigen::MatrixXd g = normal_matrix(rng, 5, 5) + 5.0 * Eigen::MatrixXd::Identity(5, 5);
        worst = std::max(worst, std::abs(dist(p * g, q, w) - dist(p, q, w)));
    }
    return {"recombination invariance", worst <= 1e-9, "max change " + format(worst)};
}

CheckResult tpfa_oracle(Rng& rng) {
    const auto mesh = build_mesh(4, 4, 2, 2);
    const CoefficientField kappa(mesh, positive_vector(rng, 16));
    const Eigen::MatrixXd a(assemble_tpfa(mesh, kappa));
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(16, 16);
    for (Index j = 0; j < 4; ++j)
        for (Index i = 0; i < 4; ++i) {
            const Index c = mesh.cell(i, j);
            auto couple = [&](Index d, double face) {
                const double k = 2.0 / (1.0 / kappa[c] + 1.0 / kappa[d]);
                const double t = k * face * face / mesh.cell_area();
                ref(c, c) += t;
                ref(c, d) -= t;
            };
            if (i > 0) couple(mesh.cell(i - 1, j), mesh.hy());
            if (i < 3) couple(mesh.cell(i + 1, j), mesh.hy());
            if (j > 0) couple(mesh.cell(i, j - 1), mesh.hx());
            if (j < 3) couple(mesh.cell(i, j + 1), mesh.hx());
        }
    const double diff = (a - ref).cwiseAbs().maxCoeff();
    const double rows = a.rowwise().sum().cwiseAbs().maxCoeff();
    return {"two-point flux operator", diff <= 1e-12 * ref.cwiseAbs().maxCoeff() && rows <= 1e-12 * ref.cwiseAbs().maxCoeff(),
            "entry error " + format(diff) + ", row sums " + format(rows)};
}

CheckResult lsp_oracle(Rng& rng) {
    const auto mesh = build_mesh(16, 16, 2, 2);
    const CoefficientField kappa(mesh, positive_vector(rng, 256));
    double worst_dist = 0.0, worst_lambda = 0.0;
    for (Index e = 0; e < mesh.coarse_count(); ++e) {
        const auto pencil = local_pencil(mesh, kappa, e);
        const auto block = solve_lsp(pencil, 5);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ref(pencil.stiffness,
                                                                      Eigen::MatrixXd(pencil.mass.asDiagonal()));
        worst_dist = std::max(worst_dist, dist(block.basis, ref.eigenvectors().leftCols(5), pencil.mass));
        worst_lambda = std::max(worst_lambda, std::abs(block.eigenvalues[0]));
    }
    return {"local spectral problem", worst_dist < 1e-8 && worst_lambda < 1e-10,
            "distance " + format(worst_dist) + ", smallest eigenvalue " + format(worst_lambda)};
}

CheckResult symmetry_labels(Rng& rng) {
    const Index m = 8;
    const double h = 1.0 / 64;
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        DatasetRecord r;
        r.m = m;
        r.kappa = positive_vector(rng, m * m);
        r.label = tile_labels(r.kappa, m, h, 5);
        for (const auto& a : symmetry_augment(r))
            worst = std::max(worst, dist(a.label, tile_labels(a.kappa, m, h, 5), a.kappa));
    }
    return {"transformed labels", worst < 1e-8, "max distance " + format(worst)};
}

CheckResult formats(Rng& rng) {
    const auto mesh = build_mesh(16, 16, 2, 2);
    const auto records = extract_records(mesh, CoefficientField(mesh, positive_vector(rng, 256)), 3);
    std::ostringstream out;
    write_dataset(out, records);
    const std::string bytes = out.str();
    std::istringstream in(bytes);
    const auto back = read_dataset(in);
    bool same = back.size() == records.size();
    for (std::size_t k = 0; same && k < back.size(); ++k)
        same = back[k].kappa == records[k].kappa && back[k].label == records[k].label;
    std::string corrupted = bytes;
    corrupted[bytes.size() / 2] ^= 0x01;
    bool detected = false;
    try {
        std::istringstream bad(corrupted);
        read_dataset(bad);
    } catch (const FormatError&) {
        detected = true;
    }
    const auto weights = UNetWeights::random(UNetArchitecture{2, 4, 1, 4, 32}, rng.bits());
    std::stringstream wio;
    write_weights(wio, weights);
    const auto wback = read_weights(wio);
    bool wsame = wback.tensors().size() == weights.tensors().size();
    for (std::size_t k = 0; wsame && k < weights.tensors().size(); ++k)
        wsame = wback.tensors()[k].values == weights.tensors()[k].values;
    return {"file formats", same && detected && wsame,
            std::string("dataset round trip ") + (same ? "ok" : "differs") + ", corruption " +
                (detected ? "detected" : "missed") + ", weights round trip " + (wsame ? "ok" : "differs")};
}

} // namespace

std::vector<CheckResult> run_verification(std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<std::pair<std::string, std::function<CheckResult(Rng&)>>> checks{
        {"distance metric axioms", metric_axioms}, {"recombination invariance", recombination},
        {"two-point flux operator", tpfa_oracle},  {"local spectral problem", lsp_oracle},
        {"transformed labels", symmetry_labels},   {"file formats", formats}};
    std::vector<CheckResult> out;
    for (const auto& [name, check] : checks) {
        try {
            out.push_back(check(rng));
        } catch (const std::exception& e) {
            out.push_back({name, false, e.what()});
        }
    }
    return out;
}

} // namespace gms
