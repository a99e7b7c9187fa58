#include "ovnlm/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ovnlm {

double psnr(const SpectralCube& reference, const SpectralCube& test) {
    if (!reference.same_shape(test))
        throw std::invalid_argument("psnr: cube dimensions differ");
    const double peak = reference.max_value();
    if (peak <= 0.0)
        throw std::invalid_argument("psnr: reference maximum must be positive");

    const auto ref = reference.samples();
    const auto tst = test.samples();
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = ref[i] - tst[i];
        sum += d * d;
    }
    if (sum == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sum / static_cast<double>(ref.size());
    return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> ssim_global(const SpectralCube& reference, const SpectralCube& test,
                                double c1, double c2) {
    if (!reference.same_shape(test))
        throw std::invalid_argument("ssim_global: cube dimensions differ");

    const double peak = reference.max_value();
    if (c1 < 0.0) c1 = (0.01 * peak) * (0.01 * peak);
    if (c2 < 0.0) c2 = (0.03 * peak) * (0.03 * peak);

    const std::size_t p = reference.bands();
    const std::size_t n = reference.pixel_count();
    const auto x = reference.samples();
    const auto y = test.samples();

    std::vector<double> out(p);
    for (std::size_t i = 0; i < p; ++i) {
        double mean_x = 0.0, mean_y = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            mean_x += x[s * p + i];
            mean_y += y[s * p + i];
        }
        mean_x /= static_cast<double>(n);
        mean_y /= static_cast<double>(n);

        double var_x = 0.0, var_y = 0.0, cov = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double dx = x[s * p + i] - mean_x;
            const double dy = y[s * p + i] - mean_y;
            var_x += dx * dx;
            var_y += dy * dy;
            cov += dx * dy;
        }
        var_x /= static_cast<double>(n);
        var_y /= static_cast<double>(n);
        cov /= static_cast<double>(n);

        out[i] = ((2.0 * mean_x * mean_y + c1) * (2.0 * cov + c2)) /
                 ((mean_x * mean_x + mean_y * mean_y + c1) * (var_x + var_y + c2));
    }
    return out;
}

QualityReport quality_report(const SpectralCube& reference, const SpectralCube& test,
                             double c1, double c2) {
    QualityReport report;
    report.psnr_db = psnr(reference, test);
    report.ssim_band = ssim_global(reference, test, c1, c2);
    double sum = 0.0;
    for (double v : report.ssim_band) sum += v;
    report.ssim_mean = sum / static_cast<double>(report.ssim_band.size());
    report.max_signal = reference.max_value();
    return report;
}

}  // namespace ovnlm
