#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ovnlm/noise.hpp"
#include "ovnlm/sure.hpp"
#include "test_support.hpp"

using namespace ovnlm;

namespace {

// Finite-difference oracles against the production chi / filter map. The
// perturbed quantity is always the observation at pixel s, component j.

Eigen::VectorXd chi_gradient_fd(const SpectralCube& cube, PixelCoord s, PixelCoord p,
                                const FilterParams& params, double step) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(cube.bands()));
    for (std::size_t j = 0; j < cube.bands(); ++j) {
        SpectralCube plus = cube, minus = cube;
        plus.at(s.row, s.col, j) += step;
        minus.at(s.row, s.col, j) -= step;
        out(static_cast<Eigen::Index>(j)) =
            (chi(plus, s, p, params) - chi(minus, s, p, params)) / (2.0 * step);
    }
    return out;
}

Eigen::VectorXd restore_at(const SpectralCube& cube, PixelCoord s,
                           const FilterParams& params) {
    const SpectralCube out = vnlm_denoise(cube, params);
    Eigen::VectorXd v(static_cast<Eigen::Index>(cube.bands()));
    for (std::size_t i = 0; i < cube.bands(); ++i)
        v(static_cast<Eigen::Index>(i)) = out.at(s.row, s.col, i);
    return v;
}

// P x P block dJ f_i(s) / dy_j(s) of the full-domain filter map.
Eigen::MatrixXd jacobian_fd(const SpectralCube& cube, PixelCoord s,
                            const FilterParams& params, double step) {
    const auto p = static_cast<Eigen::Index>(cube.bands());
    Eigen::MatrixXd jac(p, p);
    for (std::size_t j = 0; j < cube.bands(); ++j) {
        SpectralCube plus = cube, minus = cube;
        plus.at(s.row, s.col, j) += step;
        minus.at(s.row, s.col, j) -= step;
        jac.col(static_cast<Eigen::Index>(j)) =
            (restore_at(plus, s, params) - restore_at(minus, s, params)) / (2.0 * step);
    }
    return jac;
}

std::vector<PixelCoord> all_pixels(const SpectralCube& cube) {
    std::vector<PixelCoord> out;
    for (std::size_t r = 0; r < cube.height(); ++r)
        for (std::size_t c = 0; c < cube.width(); ++c) out.push_back({r, c});
    return out;
}

Eigen::MatrixXd random_spd(std::size_t p, std::uint64_t seed, double jitter) {
    std::uint64_t state = seed;
    Eigen::MatrixXd a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            a(i, j) = jitter * (2.0 * test_support::uniform01(state) - 1.0);
    return a * a.transpose() + Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

double mse(const SpectralCube& clean, const SpectralCube& restored) {
    double sum = 0.0;
    for (std::size_t i = 0; i < clean.sample_count(); ++i) {
        const double d = clean.samples()[i] - restored.samples()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(clean.pixel_count());
}

}  // namespace

TEST_CASE("chi gradient matches central finite differences") {
    const double step = 1e-5;
    std::uint64_t state = 3;
    for (int trial = 0; trial < 20; ++trial) {
        const SpectralCube cube =
            test_support::random_cube(7, 7, 2, 1000 + static_cast<std::uint64_t>(trial));
        FilterParams params;
        params.patch_radius = 3;
        params.h = 1000.0 + 1500.0 * test_support::uniform01(state);
        if (trial % 2 == 0) params.phi = random_spd(2, 500 + trial, 0.4);

        // in-window and out-of-window displacements relative to the patch span
        const PixelCoord s{2 + 2 * (test_support::splitmix(state) % 2),
                           2 + 2 * (test_support::splitmix(state) % 2)};
        const std::vector<PixelCoord> targets{
            {s.row - 2, s.col + 1},                  // p - s inside K
            {s.row == 2 ? 6u : 0u, s.col == 2 ? 6u : 0u},  // |p - s| = 4 > r: outside K
        };
        for (const PixelCoord p : targets) {
            if (p == s) continue;
            const Eigen::VectorXd analytic = chi_gradient(cube, s, p, params);
            const Eigen::VectorXd fd = chi_gradient_fd(cube, s, p, params, step);
            const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
            CHECK((analytic - fd).cwiseAbs().maxCoeff() / scale <= 1e-5);
        }
    }
}

TEST_CASE("chi gradient rejects p == s") {
    const SpectralCube cube = test_support::random_cube(5, 5, 2, 7);
    FilterParams params;
    params.h = 100.0;
    params.patch_radius = 1;
    CHECK_THROWS_AS(chi_gradient(cube, {2, 2}, {2, 2}, params), std::invalid_argument);
}

TEST_CASE("chi is the exponential of the scaled patch distance") {
    const SpectralCube cube = test_support::random_cube(6, 6, 2, 11);
    FilterParams params;
    params.h = 500.0;
    params.patch_radius = 2;
    const PixelCoord s{1, 2}, p{4, 3};
    const double d = patch_distance(cube, s, p, params);
    CHECK(chi(cube, s, p, params) ==
          doctest::Approx(std::exp(-d / (params.h * params.h))).epsilon(1e-14));
    CHECK(chi(cube, s, s, params) == 1.0);
}

TEST_CASE("divergence matches the finite-difference Jacobian") {
    const SpectralCube cube = test_support::random_cube(6, 6, 2, 13);
    const NoiseCovariance cov = NoiseCovariance::isotropic(2, 100.0);
    FilterParams params;
    params.patch_radius = 3;  // patch wider than the cube: heavy mirror overlap
    params.h = 2000.0;

    const std::vector<PixelCoord> domain = all_pixels(cube);
    std::uint64_t state = 17;
    for (int trial = 0; trial < 10; ++trial) {
        const PixelCoord s{test_support::splitmix(state) % 6,
                           test_support::splitmix(state) % 6};
        const double analytic = divergence_at(cube, s, params, domain, cov);
        const Eigen::MatrixXd jac = jacobian_fd(cube, s, params, 1e-3);
        const double fd = (cov.entries().transpose() * jac).trace();
        CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("divergence with a non-diagonal covariance") {
    const SpectralCube cube = test_support::random_cube(6, 6, 2, 19);
    Eigen::MatrixXd m(2, 2);
    m << 100.0, 35.0, 35.0, 80.0;
    const NoiseCovariance cov{m};
    FilterParams params;
    params.patch_radius = 2;
    params.h = 1500.0;
    params.phi = random_spd(2, 23, 0.5);

    const std::vector<PixelCoord> domain = all_pixels(cube);
    const PixelCoord s{3, 1};
    const double analytic = divergence_at(cube, s, params, domain, cov);
    const double fd = (cov.entries().transpose() * jacobian_fd(cube, s, params, 1e-3)).trace();
    CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("risk report decomposition is literal") {
    const SpectralCube cube = test_support::random_cube(8, 8, 2, 29, 0.0, 255.0);
    const NoiseCovariance cov = NoiseCovariance::isotropic(2, 64.0);
    FilterParams params;
    params.h = 800.0;
    params.patch_radius = 2;
    const RiskReport r = sure_risk(cube, params, cov);
    CHECK(r.risk == r.data_term - r.trace_term + r.divergence_term);
    CHECK(r.trace_term == doctest::Approx(128.0).epsilon(1e-14));
    CHECK(r.data_term >= 0.0);
}

TEST_CASE("identity filter: risk collapses to the covariance trace") {
    const SpectralCube cube = test_support::random_cube(6, 6, 2, 31, 0.0, 255.0);
    const NoiseCovariance cov = NoiseCovariance::isotropic(2, 49.0);
    FilterParams params;
    params.h = 100.0;
    params.patch_radius = 1;

    // candidate set {s} for every pixel: the filter is the identity map
    std::vector<std::uint64_t> offsets(cube.pixel_count() + 1);
    std::vector<std::uint32_t> flat(cube.pixel_count());
    for (std::size_t s = 0; s < cube.pixel_count(); ++s) {
        offsets[s] = s;
        flat[s] = static_cast<std::uint32_t>(s);
    }
    offsets[cube.pixel_count()] = cube.pixel_count();
    const CandidateSets sets(cube.height(), cube.width(), std::move(offsets), std::move(flat));

    auto [restored, risk] = denoise_with_risk(cube, params, &sets, cov);
    CHECK(restored == cube);
    CHECK(risk.data_term == 0.0);
    CHECK(risk.risk == doctest::Approx(risk.trace_term).epsilon(1e-14));
    CHECK(risk.trace_term == doctest::Approx(98.0).epsilon(1e-14));
}

TEST_CASE("zero covariance: risk equals the data term") {
    const SpectralCube cube = test_support::random_cube(7, 7, 2, 37, 0.0, 255.0);
    const NoiseCovariance cov = NoiseCovariance::zero(2);
    FilterParams params;
    params.h = 300.0;
    params.patch_radius = 2;
    const RiskReport r = sure_risk(cube, params, cov);
    CHECK(r.trace_term == 0.0);
    CHECK(r.divergence_term == 0.0);
    CHECK(r.risk == r.data_term);
    CHECK(r.data_term > 0.0);
}

TEST_CASE("denoise_with_risk returns the same cube as the plain filter") {
    const SpectralCube cube = test_support::random_cube(8, 7, 2, 41, 0.0, 255.0);
    const NoiseCovariance cov = NoiseCovariance::isotropic(2, 100.0);
    FilterParams params;
    params.h = 600.0;
    params.patch_radius = 2;
    auto [restored, risk] = denoise_with_risk(cube, params, nullptr, cov);
    const SpectralCube direct = vnlm_denoise(cube, params);
    CHECK(restored == direct);
    CHECK(std::isfinite(risk.risk));
}

TEST_CASE("SURE tracks the true MSE on piecewise-constant data") {
    const SpectralCube clean = test_support::quadrant_cube(
        12, 12, {{40.0, 200.0}, {220.0, 30.0}, {90.0, 130.0}, {180.0, 70.0}});
    const double sigma = 10.0;
    const NoiseCovariance cov = NoiseCovariance::isotropic(2, sigma * sigma);
    FilterParams params;
    params.patch_radius = 2;
    params.h = 3.0 * sigma * 25.0;

    double mean_risk = 0.0, mean_mse = 0.0;
    const int realizations = 20;
    for (int k = 0; k < realizations; ++k) {
        const SpectralCube noisy =
            add_gaussian_noise(clean, cov, 9000 + static_cast<std::uint64_t>(k));
        auto [restored, risk] = denoise_with_risk(noisy, params, nullptr, cov);
        mean_risk += risk.risk;
        mean_mse += mse(clean, restored);
    }
    mean_risk /= realizations;
    mean_mse /= realizations;
    CHECK(std::abs(mean_risk - mean_mse) <= 0.2 * mean_mse);
}
