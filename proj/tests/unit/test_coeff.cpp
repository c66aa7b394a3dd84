#include <doctest.h>

#include "gmsnet/coeff.hpp"
#include "gmsnet/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace gms;

TEST_CASE("coefficient field validation") {
    const auto mesh = build_mesh(4, 4, 2, 2);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(16);
    CHECK_NOTHROW(CoefficientField(mesh, v));
    v[3] = 0.0;
    CHECK_THROWS_AS(CoefficientField(mesh, v), ConfigError);
    v[3] = std::nan("");
    CHECK_THROWS_AS(CoefficientField(mesh, v), ConfigError);
    CHECK_THROWS_AS(CoefficientField(mesh, Eigen::VectorXd::Ones(15)), ConfigError);
}

TEST_CASE("kernel diagonal equals the variance") {
    GaussianFieldSpec spec;
    spec.sigma2 = 2.0;
    CHECK(exponential_covariance(spec, 0.0, 0.0) == 2.0);
    const auto c = covariance_matrix(build_mesh(4, 4, 1, 1), spec);
    for (Index i = 0; i < c.rows(); ++i) CHECK(c(i, i) == 2.0);
    CHECK((c - c.transpose()).norm() == 0.0);
    // anisotropic kernel at one correlation length along x
    spec.eta1 = 0.2;
    CHECK(exponential_covariance(spec, 0.2, 0.0) == doctest::Approx(2.0 * std::exp(-1.0)));
}

TEST_CASE("zero variance gives the unit field") {
    const auto mesh = build_mesh(8, 8, 2, 2);
    GaussianFieldSpec spec;
    spec.sigma2 = 0.0;
    const auto kappa = sample_log_gaussian(mesh, spec, 7);
    CHECK((kappa.values().array() == 1.0).all());
}

TEST_CASE("gaussian field parameters are validated") {
    GaussianFieldSpec spec;
    spec.eta1 = 0.0;
    CHECK_THROWS_AS(spec.validate(16), ConfigError);
    spec = {};
    spec.sigma2 = -1.0;
    CHECK_THROWS_AS(spec.validate(16), ConfigError);
    spec = {};
    spec.modes = 17;
    CHECK_THROWS_AS(spec.validate(16), ConfigError);
}

TEST_CASE("log-gaussian sampling is deterministic per seed") {
    const auto mesh = build_mesh(8, 8, 2, 2);
    GaussianFieldSpec spec;
    const GaussianFieldSampler sampler(mesh, spec);
    const auto a = sampler.sample(11);
    const auto b = sampler.sample(11);
    const auto c = sampler.sample(12);
    CHECK((a.values().array() == b.values().array()).all());
    CHECK((a.values() - c.values()).norm() > 0.0);
    CHECK((sample_log_gaussian(mesh, spec, 11).values().array() == a.values().array()).all());
}

TEST_CASE("log-gaussian eigenvalues are nonincreasing and nonnegative") {
    const auto mesh = build_mesh(12, 12, 1, 1);
    const GaussianFieldSampler sampler(mesh, GaussianFieldSpec{});
    const auto& mu = sampler.eigenvalues();
    CHECK(mu.minCoeff() >= 0.0);
    for (Index i = 1; i < mu.size(); ++i) CHECK(mu[i] <= mu[i - 1]);
    // all modes kept: the spectrum carries the full trace of the covariance
    CHECK(mu.sum() == doctest::Approx(2.0 * 144).epsilon(1e-10));
}

TEST_CASE("subspace iteration agrees with the dense eigensolver") {
    // 48x48 exceeds the dense threshold when few modes are requested
    const auto mesh = build_mesh(48, 48, 1, 1);
    GaussianFieldSpec spec;
    spec.modes = 20;
    const GaussianFieldSampler fast(mesh, spec);
    const Eigen::MatrixXd c = covariance_matrix(mesh, spec);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    const Eigen::VectorXd ref = eig.eigenvalues().reverse().head(20);
    for (Index i = 0; i < 20; ++i) CHECK(fast.eigenvalues()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("log-gaussian moments by Monte Carlo") {
    const auto mesh = build_mesh(8, 8, 1, 1);
    GaussianFieldSpec spec;
    const GaussianFieldSampler sampler(mesh, spec);
    const int samples = 10000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(64);
    Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(64);
    for (int s = 0; s < samples; ++s) {
        const Eigen::VectorXd z = sampler.sample(static_cast<std::uint64_t>(s)).values().array().log();
        sum += z;
        sum2 += z.cwiseAbs2();
    }
    const Eigen::VectorXd mean = sum / samples;
    const Eigen::VectorXd var = sum2 / samples - mean.cwiseAbs2();
    const double se = std::sqrt(2.0 / samples);
    CHECK(std::abs(mean[0]) < 3.0 * se);
    // 64 cells at once: widen to keep the family-wise false alarm rate small
    CHECK(mean.cwiseAbs().maxCoeff() < 4.0 * se);
    CHECK((var.array() - 2.0).abs().maxCoeff() < 0.2);
}

TEST_CASE("harmonic cell value") {
    CHECK(harmonic_cell_value(0.5, 4.0, 1.0) == doctest::Approx(1.6));
    CHECK(harmonic_cell_value(1.0, 4.0, 1.0) == doctest::Approx(4.0));
    CHECK(harmonic_cell_value(0.0, 4.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("half-covered cell takes the harmonic mean") {
    const auto mesh = build_mesh(2, 2, 1, 1);
    CHECK((rasterize_disks(mesh, {}, 4.0, 1.0).values().array() == 1.0).all());
    // left edge of the disk at x = 0.25 splits cell 0 ([0, 0.5]^2): the two
    // right sub-sample columns (x = 0.3125, 0.4375) are inside, the left two are not
    const std::vector<Disk> disk{{0.74, 0.25, 0.49}};
    const auto kappa = rasterize_disks(mesh, disk, 4.0, 1.0);
    CHECK(kappa[0] == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("disk fields") {
    const auto mesh = build_mesh(64, 64, 8, 8);
    DiskFieldSpec spec;
    spec.n_disks = 0;
    CHECK((sample_random_disks(mesh, spec, 3).values().array() == 1.0).all());

    spec = {};
    const auto disks = place_disks(spec, 5);
    REQUIRE(disks.size() == 15);
    for (std::size_t i = 0; i < disks.size(); ++i) {
        CHECK(disks[i].x - disks[i].radius >= 0.0);
        CHECK(disks[i].x + disks[i].radius <= 1.0);
        CHECK(disks[i].y - disks[i].radius >= 0.0);
        CHECK(disks[i].y + disks[i].radius <= 1.0);
        for (std::size_t j = 0; j < i; ++j)
            CHECK(std::hypot(disks[i].x - disks[j].x, disks[i].y - disks[j].y) >=
                  disks[i].radius + disks[j].radius);
    }
    const auto kappa = sample_random_disks(mesh, spec, 5);
    CHECK(kappa.min() >= 1.0);
    CHECK(kappa.max() <= 1e4);
    CHECK(kappa.max() == 1e4);
    const auto& v = kappa.values();
    CHECK(((v.array() > 1.0) && (v.array() < 1e4)).any());
    const auto again = sample_random_disks(mesh, spec, 5);
    CHECK((again.values().array() == v.array()).all());
}

TEST_CASE("infeasible disk placement fails") {
    DiskFieldSpec spec;
    spec.n_disks = 100;
    spec.radius_min = 0.3;
    spec.radius_max = 0.4;
    spec.max_attempts = 1000;
    CHECK_THROWS_AS(place_disks(spec, 1), Error);
    spec = {};
    spec.radius_max = 0.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
