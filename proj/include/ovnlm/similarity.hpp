#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ovnlm/cube.hpp"
#include "ovnlm/noise.hpp"

namespace ovnlm {

inline double erf(double x) { return std::erf(x); }

struct SimilarityConfig {
    double varsigma = 100.0;   // cutoff parameter, > 1
    double omega_const = 1.0;  // |Omega| normalization constant
    std::vector<double> band_max;  // x_s0 per band; empty = take per-band max of the cube
};

// Cutoff width: values beyond x_p +- tau are treated as zero-similarity.
inline double similarity_cutoff(double sigma, double varsigma) {
    return 2.0 * std::sqrt(2.0 * std::log(varsigma)) * sigma;
}

// Probabilistic intensity similarity between two scalar observations under
// Gaussian noise of std sigma, with true intensities in [0, x_s0]. Zero
// outside the cutoff width.
double scalar_similarity(double x_s, double x_p, double sigma, double x_s0,
                         const SimilarityConfig& cfg);

// Product of per-band scalar similarities; zero as soon as any band exceeds
// its cutoff.
double vector_similarity(std::span<const double> i_s, std::span<const double> i_p,
                         std::span<const double> sigmas, const SimilarityConfig& cfg);

// Per-pixel candidate lists in row-major order. Every list contains the pixel
// itself.
class CandidateSets {
public:
    CandidateSets(std::size_t height, std::size_t width,
                  std::vector<std::uint64_t> offsets, std::vector<std::uint32_t> flat);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t pixel_count() const { return height_ * width_; }

    std::span<const std::uint32_t> candidates(std::size_t pixel_index) const {
        return {flat_.data() + offsets_[pixel_index],
                static_cast<std::size_t>(offsets_[pixel_index + 1] - offsets_[pixel_index])};
    }
    std::size_t size_of(std::size_t pixel_index) const {
        return static_cast<std::size_t>(offsets_[pixel_index + 1] - offsets_[pixel_index]);
    }
    double mean_size() const;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint64_t> offsets_;  // pixel_count()+1 entries
    std::vector<std::uint32_t> flat_;     // ascending pixel indices per list
};

// Candidate set of s = all p whose per-band intensity difference stays within
// the cutoff 2*sqrt(2 ln varsigma)*sigma_i for every band, with
// sigma_i = sqrt(Psi(i,i)). Requires strictly positive diagonal entries.
CandidateSets build_candidate_sets(const SpectralCube& cube, const NoiseCovariance& cov,
                                   const SimilarityConfig& cfg);

// Per-pixel candidate counts as a single-band cube, for selectivity dumps.
SpectralCube candidate_count_cube(const CandidateSets& sets);

}  // namespace ovnlm
