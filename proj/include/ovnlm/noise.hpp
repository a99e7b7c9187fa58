#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "ovnlm/cube.hpp"

namespace ovnlm {

// P x P inter-band noise covariance. Symmetric by construction; projected to
// the PSD cone (eigenvalue clipping at zero) on creation.
class NoiseCovariance {
public:
    explicit NoiseCovariance(Eigen::MatrixXd entries);

    static NoiseCovariance isotropic(std::size_t bands, double variance);
    static NoiseCovariance zero(std::size_t bands);

    std::size_t bands() const { return static_cast<std::size_t>(entries_.rows()); }
    const Eigen::MatrixXd& entries() const { return entries_; }
    double operator()(std::size_t i, std::size_t j) const {
        return entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    double trace() const { return entries_.trace(); }

    // V sqrt(D) V^T of the projected matrix, used to color unit Gaussians.
    Eigen::MatrixXd symmetric_sqrt() const;

private:
    Eigen::MatrixXd entries_;
};

NoiseCovariance read_covariance_csv(const std::filesystem::path& path);
void write_covariance_csv(const NoiseCovariance& cov, const std::filesystem::path& path);

// output(s) = input(s) + n_s, n_s i.i.d. zero-mean Gaussian of covariance cov.
// The per-pixel draw is derived from (seed, pixel index) alone, so the result
// is identical for any worker count.
SpectralCube add_gaussian_noise(const SpectralCube& cube, const NoiseCovariance& cov,
                                std::uint64_t seed);

// sigma such that i.i.d. per-band noise of variance sigma^2 yields an expected
// input PSNR equal to the target: sigma = max(cube) * 10^(-target/20).
double sigma_for_target_psnr(const SpectralCube& cube, double target_psnr_db);

// Median-absolute-deviation covariance estimate: diagonal from 1.4826*MAD per
// band, off-diagonals from the MAD of standardized band sums and differences.
// Bands with zero MAD get zero off-diagonal entries and a warning on stderr.
NoiseCovariance estimate_noise_covariance_mad(const SpectralCube& cube);

}  // namespace ovnlm
