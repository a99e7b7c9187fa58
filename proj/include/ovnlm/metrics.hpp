#pragma once

#include <vector>

#include "ovnlm/cube.hpp"

namespace ovnlm {

struct QualityReport {
    double psnr_db = 0.0;
    std::vector<double> ssim_band;
    double ssim_mean = 0.0;
    double max_signal = 0.0;
};

// 10*log10(max(ref)^2 / MSE), MSE averaged over all H*L*P samples and the max
// taken over the whole reference cube. Identical cubes return +infinity.
double psnr(const SpectralCube& reference, const SpectralCube& test);

// Global-statistics SSIM per band (no sliding window): means, variances and
// covariance are taken over the full band. Defaults c1=(0.01*D)^2,
// c2=(0.03*D)^2 with D the reference maximum; pass non-negative values to
// override.
std::vector<double> ssim_global(const SpectralCube& reference, const SpectralCube& test,
                                double c1 = -1.0, double c2 = -1.0);

QualityReport quality_report(const SpectralCube& reference, const SpectralCube& test,
                             double c1 = -1.0, double c2 = -1.0);

}  // namespace ovnlm
