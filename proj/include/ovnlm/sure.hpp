#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>

#include "ovnlm/cube.hpp"
#include "ovnlm/filter.hpp"
#include "ovnlm/noise.hpp"
#include "ovnlm/similarity.hpp"

namespace ovnlm {

// Empirical Stein risk of one filtering pass, split into its three terms.
// risk is stored as literally data_term - trace_term + divergence_term.
struct RiskReport {
    double data_term = 0.0;        // (1/HL) sum_s ||I_out(s) - I_in(s)||^2
    double trace_term = 0.0;       // trace(Psi)
    double divergence_term = 0.0;  // (2/HL) sum_s trace(Psi^T J(s))
    double risk = 0.0;
};

double chi(const SpectralCube& cube, PixelCoord s, PixelCoord p, const FilterParams& params);

// d chi(s,p) / d I(s_j) for j = 0..P-1, mirror-extension aware. Requires p != s.
Eigen::VectorXd chi_gradient(const SpectralCube& cube, PixelCoord s, PixelCoord p,
                             const FilterParams& params);

// trace(Psi^T J(s)) with the Jacobian of the restored pixel s assembled over
// the frozen candidate list (which must contain s).
double divergence_at(const SpectralCube& cube, PixelCoord s, const FilterParams& params,
                     std::span<const PixelCoord> candidates, const NoiseCovariance& cov);

// Full pass: filter and risk in one sweep. Null candidates means the full
// domain. Per-pixel terms are reduced in row-major order.
std::pair<SpectralCube, RiskReport> denoise_with_risk(const SpectralCube& noisy,
                                                      const FilterParams& params,
                                                      const CandidateSets* candidates,
                                                      const NoiseCovariance& cov);

RiskReport sure_risk(const SpectralCube& noisy, const FilterParams& params,
                     const CandidateSets& candidates, const NoiseCovariance& cov);
RiskReport sure_risk(const SpectralCube& noisy, const FilterParams& params,
                     const NoiseCovariance& cov);

}  // namespace ovnlm
