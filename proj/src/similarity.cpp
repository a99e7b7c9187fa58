#include "ovnlm/similarity.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ovnlm/parallel.hpp"

namespace ovnlm {

double scalar_similarity(double x_s, double x_p, double sigma, double x_s0,
                         const SimilarityConfig& cfg) {
    if (sigma <= 0.0)
        throw std::invalid_argument("scalar_similarity: sigma must be positive");
    if (std::abs(x_s - x_p) > similarity_cutoff(sigma, cfg.varsigma)) return 0.0;

    const double diff = x_s - x_p;
    const double gauss = std::exp(-diff * diff / (4.0 * sigma * sigma));
    const double tail = erf((2.0 * x_s0 - x_s - x_p) / (2.0 * sigma)) +
                        erf((x_s + x_p) / (2.0 * sigma));
    return gauss * tail * std::numbers::inv_sqrtpi / (4.0 * sigma * cfg.omega_const);
}

double vector_similarity(std::span<const double> i_s, std::span<const double> i_p,
                         std::span<const double> sigmas, const SimilarityConfig& cfg) {
    if (i_s.size() != i_p.size() || i_s.size() != sigmas.size())
        throw std::invalid_argument("vector_similarity: length mismatch");
    if (!cfg.band_max.empty() && cfg.band_max.size() != i_s.size())
        throw std::invalid_argument("vector_similarity: band_max length mismatch");

    double product = 1.0;
    for (std::size_t i = 0; i < i_s.size(); ++i) {
        const double x_s0 = cfg.band_max.empty() ? 1.0 : cfg.band_max[i];
        const double s = scalar_similarity(i_s[i], i_p[i], sigmas[i], x_s0, cfg);
        if (s == 0.0) return 0.0;
        product *= s;
    }
    return product;
}

CandidateSets::CandidateSets(std::size_t height, std::size_t width,
                             std::vector<std::uint64_t> offsets,
                             std::vector<std::uint32_t> flat)
    : height_(height), width_(width), offsets_(std::move(offsets)), flat_(std::move(flat)) {
    if (offsets_.size() != height_ * width_ + 1)
        throw std::invalid_argument("CandidateSets: offset table size mismatch");
    if (offsets_.back() != flat_.size())
        throw std::invalid_argument("CandidateSets: flat array size mismatch");
}

double CandidateSets::mean_size() const {
    return static_cast<double>(flat_.size()) / static_cast<double>(pixel_count());
}

CandidateSets build_candidate_sets(const SpectralCube& cube, const NoiseCovariance& cov,
                                   const SimilarityConfig& cfg) {
    if (cov.bands() != cube.bands())
        throw std::invalid_argument("build_candidate_sets: covariance band count mismatch");
    if (cfg.varsigma <= 1.0)
        throw std::invalid_argument("build_candidate_sets: varsigma must exceed 1");

    const std::size_t p = cube.bands();
    const std::size_t n = cube.pixel_count();

    std::vector<double> tau(p);
    for (std::size_t i = 0; i < p; ++i) {
        const double var = cov(i, i);
        if (var <= 0.0)
            throw std::invalid_argument(
                "build_candidate_sets: zero-variance band " + std::to_string(i) +
                "; regularize the covariance diagonal (--diag-reg)");
        tau[i] = similarity_cutoff(std::sqrt(var), cfg.varsigma);
    }

    const auto samples = cube.samples();

    // Pivot on the most selective band (largest value range relative to its
    // cutoff) and sort pixels by it once; each query then reduces to a binary
    // search plus a band-wise check of the narrowed range.
    std::size_t pivot = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < p; ++i) {
        double lo = samples[i], hi = samples[i];
        for (std::size_t s = 1; s < n; ++s) {
            lo = std::min(lo, samples[s * p + i]);
            hi = std::max(hi, samples[s * p + i]);
        }
        const double selectivity = (hi - lo) / tau[i];
        if (selectivity > best) {
            best = selectivity;
            pivot = i;
        }
    }

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return samples[a * p + pivot] < samples[b * p + pivot];
    });
    std::vector<double> sorted_pivot(n);
    for (std::size_t k = 0; k < n; ++k) sorted_pivot[k] = samples[order[k] * p + pivot];

    std::vector<std::vector<std::uint32_t>> lists(n);
    parallel_chunks(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            const double* ys = samples.data() + s * p;
            const auto lo = std::lower_bound(sorted_pivot.begin(), sorted_pivot.end(),
                                             ys[pivot] - tau[pivot]);
            const auto hi = std::upper_bound(lo, sorted_pivot.end(), ys[pivot] + tau[pivot]);

            auto& list = lists[s];
            for (auto it = lo; it != hi; ++it) {
                const std::uint32_t q = order[static_cast<std::size_t>(it - sorted_pivot.begin())];
                const double* yq = samples.data() + q * p;
                bool keep = true;
                for (std::size_t i = 0; i < p; ++i) {
                    if (std::abs(ys[i] - yq[i]) > tau[i]) {
                        keep = false;
                        break;
                    }
                }
                if (keep) list.push_back(q);
            }
            std::sort(list.begin(), list.end());
        }
    });

    std::vector<std::uint64_t> offsets(n + 1, 0);
    for (std::size_t s = 0; s < n; ++s) offsets[s + 1] = offsets[s] + lists[s].size();
    std::vector<std::uint32_t> flat(offsets.back());
    parallel_chunks(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s)
            std::copy(lists[s].begin(), lists[s].end(), flat.begin() + static_cast<std::ptrdiff_t>(offsets[s]));
    });
    return CandidateSets(cube.height(), cube.width(), std::move(offsets), std::move(flat));
}

SpectralCube candidate_count_cube(const CandidateSets& sets) {
    SpectralCube out(sets.height(), sets.width(), 1);
    for (std::size_t s = 0; s < sets.pixel_count(); ++s)
        out.samples()[s] = static_cast<double>(sets.size_of(s));
    return out;
}

}  // namespace ovnlm
