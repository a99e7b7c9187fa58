#include "ovnlm/sure.hpp"

#include <numeric>
#include <stdexcept>

#include "ovnlm/parallel.hpp"

namespace ovnlm {

namespace {

std::size_t checked_index(const SpectralCube& cube, PixelCoord c, const char* what) {
    if (c.row >= cube.height() || c.col >= cube.width())
        throw std::invalid_argument(std::string(what) + ": pixel out of bounds");
    return cube.pixel_index(c);
}

}  // namespace

double chi(const SpectralCube& cube, PixelCoord s, PixelCoord p, const FilterParams& params) {
    const std::size_t si = checked_index(cube, s, "chi");
    const std::size_t pi = checked_index(cube, p, "chi");
    return FilterEngine(cube, params).chi(si, pi);
}

Eigen::VectorXd chi_gradient(const SpectralCube& cube, PixelCoord s, PixelCoord p,
                             const FilterParams& params) {
    const std::size_t si = checked_index(cube, s, "chi_gradient");
    const std::size_t pi = checked_index(cube, p, "chi_gradient");
    if (si == pi)
        throw std::invalid_argument("chi_gradient: p must differ from s (chi(s,s) is constant)");
    const FilterEngine engine(cube, params);
    FilterWorkspace ws = engine.make_workspace();
    Eigen::VectorXd out(static_cast<Eigen::Index>(cube.bands()));
    engine.chi_gradient(si, pi, ws, out);
    return out;
}

double divergence_at(const SpectralCube& cube, PixelCoord s, const FilterParams& params,
                     std::span<const PixelCoord> candidates, const NoiseCovariance& cov) {
    if (cov.bands() != cube.bands())
        throw std::invalid_argument("divergence_at: covariance band count mismatch");
    const std::size_t si = checked_index(cube, s, "divergence_at");
    std::vector<std::uint32_t> idx(candidates.size());
    bool has_self = false;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        idx[k] = static_cast<std::uint32_t>(checked_index(cube, candidates[k], "divergence_at"));
        has_self = has_self || idx[k] == si;
    }
    if (!has_self)
        throw std::invalid_argument("divergence_at: candidate list must include the pixel itself");

    const FilterEngine engine(cube, params);
    FilterWorkspace ws = engine.make_workspace();
    std::vector<double> out(cube.bands());
    return engine.restore_pixel_with_divergence(si, idx, cov.entries(), ws, out.data());
}

std::pair<SpectralCube, RiskReport> denoise_with_risk(const SpectralCube& noisy,
                                                      const FilterParams& params,
                                                      const CandidateSets* candidates,
                                                      const NoiseCovariance& cov) {
    if (cov.bands() != noisy.bands())
        throw std::invalid_argument("sure_risk: covariance band count mismatch");
    if (candidates &&
        (candidates->height() != noisy.height() || candidates->width() != noisy.width()))
        throw std::invalid_argument("sure_risk: candidate sets sized for another cube");

    const FilterEngine engine(noisy, params);
    const std::size_t n = noisy.pixel_count();
    const std::size_t nb = noisy.bands();
    std::vector<std::uint32_t> all;
    if (!candidates) {
        all.resize(n);
        std::iota(all.begin(), all.end(), 0u);
    }

    SpectralCube out(noisy.height(), noisy.width(), nb);
    double* dst = out.samples().data();
    const double* src = noisy.samples().data();
    const Eigen::MatrixXd& psi = cov.entries();

    std::vector<double> data(n), divergence(n);
    parallel_chunks(n, [&](std::size_t begin, std::size_t end) {
        FilterWorkspace ws = engine.make_workspace();
        for (std::size_t s = begin; s < end; ++s) {
            const std::span<const std::uint32_t> list =
                candidates ? candidates->candidates(s) : std::span<const std::uint32_t>(all);
            divergence[s] =
                engine.restore_pixel_with_divergence(s, list, psi, ws, dst + s * nb);
            double d2 = 0.0;
            for (std::size_t i = 0; i < nb; ++i) {
                const double d = dst[s * nb + i] - src[s * nb + i];
                d2 += d * d;
            }
            data[s] = d2;
        }
    });

    // Fixed row-major reduction so the report is worker-count independent.
    double data_sum = 0.0, div_sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        data_sum += data[s];
        div_sum += divergence[s];
    }

    RiskReport report;
    const double hl = static_cast<double>(n);
    report.data_term = data_sum / hl;
    report.trace_term = psi.trace();
    report.divergence_term = 2.0 * div_sum / hl;
    report.risk = report.data_term - report.trace_term + report.divergence_term;
    return {std::move(out), report};
}

RiskReport sure_risk(const SpectralCube& noisy, const FilterParams& params,
                     const CandidateSets& candidates, const NoiseCovariance& cov) {
    return denoise_with_risk(noisy, params, &candidates, cov).second;
}

RiskReport sure_risk(const SpectralCube& noisy, const FilterParams& params,
                     const NoiseCovariance& cov) {
    return denoise_with_risk(noisy, params, nullptr, cov).second;
}

}  // namespace ovnlm
