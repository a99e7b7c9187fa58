#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "ovnlm/cube.hpp"
#include "ovnlm/similarity.hpp"

namespace ovnlm {

enum class MetricShape { identity, diagonal, full };
enum class PatchKernel { uniform, gaussian };

// Theta = (h, Phi) plus the patch geometry. An empty phi means the identity
// metric. metric_shape records which parameterization of Phi the optimizer may
// vary; the filter itself only reads phi.
struct FilterParams {
    double h = 1.0;
    Eigen::MatrixXd phi;
    std::ptrdiff_t patch_radius = 3;
    MetricShape metric_shape = MetricShape::full;
    PatchKernel kernel = PatchKernel::uniform;
    double kernel_sigma = 1.0;

    void validate(std::size_t bands) const;  // throws std::invalid_argument
};

// Per-thread scratch buffers for the hot per-pixel loops.
struct FilterWorkspace {
    Eigen::VectorXd diff;    // P
    Eigen::VectorXd grad;    // P
    Eigen::VectorXd scaled;  // P
    Eigen::VectorXd numer;   // P
    Eigen::VectorXd s1;      // P
    Eigen::MatrixXd m2;      // P x P
};

// Precomputed state for one filter invocation over a fixed cube: mirror
// tables, intra-patch kernel weights and the inverted metric. The metric is
// factored once; a ridge of 1e-8*trace(Phi)/P is added only when the
// factorization reports (near-)singularity, so a well-conditioned Phi is
// inverted as given. Phi exactly equal to the identity short-circuits to a
// plain per-band Euclidean accumulation.
class FilterEngine {
public:
    FilterEngine(const SpectralCube& cube, const FilterParams& params);

    const SpectralCube& cube() const { return *cube_; }
    std::size_t bands() const { return bands_; }
    std::size_t pixel_count() const { return cube_->pixel_count(); }
    double h() const { return h_; }
    bool euclidean() const { return euclidean_; }
    // Inverse metric actually used (identity when the fast path is active).
    Eigen::MatrixXd inverse_metric() const;

    std::size_t neighbor(std::size_t pixel, std::size_t offset_index) const {
        const std::size_t row = pixel / width_;
        const std::size_t col = pixel % width_;
        return row_table_[row * ksize_ + offset_index / ksize_] * width_ +
               col_table_[col * ksize_ + offset_index % ksize_];
    }

    double patch_distance(std::size_t s, std::size_t p) const;
    double chi(std::size_t s, std::size_t p) const;

    // d chi(s,p) / d I(s_j), j = 0..P-1, with the mirror extension taken into
    // account (border patches may alias additional offsets onto s).
    void chi_gradient(std::size_t s, std::size_t p, FilterWorkspace& ws,
                      Eigen::VectorXd& out) const;

    // Weighted average over the candidate list, in list order. out has P slots.
    void restore_pixel(std::size_t s, std::span<const std::uint32_t> candidates,
                       FilterWorkspace& ws, double* out) const;

    // Same pass, additionally assembling the per-pixel Jacobian contraction
    // trace(Psi^T J(s)) over the frozen candidate list.
    double restore_pixel_with_divergence(std::size_t s,
                                         std::span<const std::uint32_t> candidates,
                                         const Eigen::MatrixXd& psi, FilterWorkspace& ws,
                                         double* out) const;

    FilterWorkspace make_workspace() const;

private:
    double pair_distance_and_grad(std::size_t s, std::size_t p, FilterWorkspace& ws,
                                  bool want_grad) const;

    const SpectralCube* cube_;
    std::size_t height_, width_, bands_;
    std::size_t ksize_;   // 2r+1
    double h_;
    double inv_h2_;
    bool euclidean_ = true;
    Eigen::MatrixXd metric_;               // inverse of Phi (general path)
    std::vector<double> kernel_weights_;   // ksize*ksize, row-major in (dr, dc)
    bool uniform_kernel_ = true;
    std::vector<std::uint32_t> row_table_; // height x ksize mirrored rows
    std::vector<std::uint32_t> col_table_; // width x ksize mirrored cols
    std::vector<std::uint16_t> row_hits_;  // [from][to] bitmask over dr: mirror(from-dr)==to
    std::vector<std::uint16_t> col_hits_;  // [from][to] bitmask over dc
};

// Coordinate-based convenience wrappers around the engine.
double patch_distance(const SpectralCube& cube, PixelCoord s, PixelCoord p,
                      const FilterParams& params);

std::vector<double> vnlm_weights(const SpectralCube& cube, PixelCoord s,
                                 std::span<const PixelCoord> candidates,
                                 const FilterParams& params);

// Full-domain vector NLM: every pixel averages over the whole image.
SpectralCube vnlm_denoise(const SpectralCube& cube, const FilterParams& params);

// Restricted to prebuilt candidate sets (the preselected filter).
SpectralCube vnlm_denoise(const SpectralCube& cube, const FilterParams& params,
                          const CandidateSets& candidates);

// Classic single-band NLM with the Gaussian-weighted patch distance of
// standard deviation a, full-image sum.
SpectralCube scalar_nlm_denoise(const SpectralCube& band, double h, double a,
                                std::ptrdiff_t patch_radius);

}  // namespace ovnlm
