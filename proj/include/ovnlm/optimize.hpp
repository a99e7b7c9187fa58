#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <vector>

#include "ovnlm/filter.hpp"
#include "ovnlm/noise.hpp"
#include "ovnlm/similarity.hpp"
#include "ovnlm/sure.hpp"

namespace ovnlm {

enum class StopReason { iter_max, risk_plateau, line_search_failure };

const char* to_string(StopReason reason);

struct OptimizerConfig {
    std::size_t iter_max = 50;
    // Stop once the per-iteration risk decrease falls to xi or below.
    // Negative means auto: 1e-4 * |initial risk|.
    double xi = -1.0;
    // Which part of Theta varies: identity holds Phi at its initial value and
    // tunes h only; diagonal and full tune a triangular factor of Phi as well.
    // Unset picks full for P <= 8 and diagonal above.
    std::optional<MetricShape> metric_shape;
    double fd_step = 1e-4;  // relative finite-difference step for risk gradients
    double line_search_shrink = 0.5;
    std::size_t max_backtracks = 20;
};

struct TracePoint {
    std::size_t iter = 0;
    double h = 0.0;
    Eigen::MatrixXd phi;
    double risk = 0.0;
};

struct OptimizationTrace {
    std::vector<TracePoint> points;  // starts with the initial Theta; risks nonincreasing
    StopReason stop_reason = StopReason::iter_max;
};

struct OptimizeResult {
    FilterParams params;
    OptimizationTrace trace;
};

MetricShape default_metric_shape(std::size_t bands);

// Quasi-Newton descent on reparameterized Theta: h = exp(alpha), Phi = LL^T
// plus a tiny ridge, so h > 0 and Phi PSD hold at every iterate. Gradients by
// central finite differences, steps accepted only when the risk decreases.
// Null candidates means the full domain; the sets are frozen throughout.
OptimizeResult optimize_params(const SpectralCube& noisy, const NoiseCovariance& cov,
                               const FilterParams& init, const OptimizerConfig& cfg,
                               const CandidateSets* candidates);

inline OptimizeResult optimize_params(const SpectralCube& noisy, const NoiseCovariance& cov,
                                      const FilterParams& init, const OptimizerConfig& cfg,
                                      const CandidateSets& candidates) {
    return optimize_params(noisy, cov, init, cfg, &candidates);
}

// h0 = sqrt(trace(Psi)/P) * (2r+1)^2 (noise sigma times patch size), Phi0 the
// covariance diagonal normalized to trace P. Zero-trace Psi falls back to
// h0 = 1 and the identity with a warning on stderr.
FilterParams default_init(const NoiseCovariance& cov, std::ptrdiff_t patch_radius = 3);

// CSV: iter,h,phi_0_0,...,phi_{P-1}_{P-1},risk
void write_trace_csv(const OptimizationTrace& trace, const std::filesystem::path& path);

}  // namespace ovnlm
