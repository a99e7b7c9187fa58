#include "ovnlm/filter.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ovnlm/parallel.hpp"

namespace ovnlm {

namespace {

bool is_exact_identity(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (m(i, j) != (i == j ? 1.0 : 0.0)) return false;
    return true;
}

}  // namespace

void FilterParams::validate(std::size_t bands) const {
    if (!(h > 0.0) || !std::isfinite(h))
        throw std::invalid_argument("FilterParams: h must be positive and finite");
    if (patch_radius < 0 || patch_radius > 7)
        throw std::invalid_argument("FilterParams: patch_radius must be in [0, 7]");
    if (kernel == PatchKernel::gaussian && !(kernel_sigma > 0.0))
        throw std::invalid_argument("FilterParams: gaussian kernel needs kernel_sigma > 0");
    if (phi.size() != 0) {
        if (phi.rows() != phi.cols() || phi.rows() != static_cast<Eigen::Index>(bands))
            throw std::invalid_argument("FilterParams: phi must be P x P");
        const double scale = std::max(phi.cwiseAbs().maxCoeff(), 1.0);
        if ((phi - phi.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
            throw std::invalid_argument("FilterParams: phi must be symmetric");
        if (!phi.allFinite())
            throw std::invalid_argument("FilterParams: phi has non-finite entries");
    }
}

FilterEngine::FilterEngine(const SpectralCube& cube, const FilterParams& params)
    : cube_(&cube), height_(cube.height()), width_(cube.width()), bands_(cube.bands()) {
    params.validate(bands_);
    const std::ptrdiff_t r = params.patch_radius;
    ksize_ = static_cast<std::size_t>(2 * r + 1);
    h_ = params.h;
    inv_h2_ = 1.0 / (h_ * h_);

    kernel_weights_.resize(ksize_ * ksize_, 1.0);
    uniform_kernel_ = params.kernel == PatchKernel::uniform;
    if (!uniform_kernel_) {
        const double a2 = params.kernel_sigma * params.kernel_sigma;
        const double norm = 1.0 / (2.0 * std::numbers::pi * a2);
        std::size_t idx = 0;
        for (std::ptrdiff_t dr = -r; dr <= r; ++dr)
            for (std::ptrdiff_t dc = -r; dc <= r; ++dc)
                kernel_weights_[idx++] =
                    norm * std::exp(-static_cast<double>(dr * dr + dc * dc) / (2.0 * a2));
    }

    auto fill_axis = [&](std::size_t n, std::vector<std::uint32_t>& table,
                         std::vector<std::uint16_t>& hits) {
        table.resize(n * ksize_);
        hits.assign(n * n, 0);
        for (std::size_t x = 0; x < n; ++x) {
            for (std::size_t t = 0; t < ksize_; ++t) {
                const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(t) - r;
                const auto m = static_cast<std::uint32_t>(
                    mirror_coord(static_cast<std::ptrdiff_t>(x) - offset,
                                 static_cast<std::ptrdiff_t>(n)));
                table[x * ksize_ + t] = m;
                hits[x * n + m] |= static_cast<std::uint16_t>(1u << t);
            }
        }
    };
    fill_axis(height_, row_table_, row_hits_);
    fill_axis(width_, col_table_, col_hits_);

    euclidean_ = params.phi.size() == 0 || is_exact_identity(params.phi);
    if (!euclidean_) {
        const auto p = static_cast<Eigen::Index>(bands_);
        Eigen::MatrixXd phi = (params.phi + params.phi.transpose()) / 2.0;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(phi);
        auto near_singular = [](const Eigen::LDLT<Eigen::MatrixXd>& f) {
            const Eigen::VectorXd d = f.vectorD();
            const double dmax = d.cwiseAbs().maxCoeff();
            const double dmin = d.minCoeff();
            return f.info() != Eigen::Success || !(dmin > 0.0) || dmin <= 1e-12 * dmax;
        };
        if (near_singular(ldlt)) {
            double eps = 1e-8 * phi.trace() / static_cast<double>(bands_);
            if (!(eps > 0.0)) eps = 1e-8;
            phi += eps * Eigen::MatrixXd::Identity(p, p);
            ldlt.compute(phi);
            if (near_singular(ldlt))
                throw std::invalid_argument("FilterParams: phi is singular even after ridge");
        }
        metric_ = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        metric_ = ((metric_ + metric_.transpose()) / 2.0).eval();
    }
}

Eigen::MatrixXd FilterEngine::inverse_metric() const {
    if (euclidean_)
        return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(bands_),
                                         static_cast<Eigen::Index>(bands_));
    return metric_;
}

FilterWorkspace FilterEngine::make_workspace() const {
    const auto p = static_cast<Eigen::Index>(bands_);
    FilterWorkspace ws;
    ws.diff.resize(p);
    ws.grad.resize(p);
    ws.scaled.resize(p);
    ws.numer.resize(p);
    ws.s1.resize(p);
    ws.m2.resize(p, p);
    return ws;
}

double FilterEngine::pair_distance_and_grad(std::size_t s, std::size_t p, FilterWorkspace& ws,
                                            bool want_grad) const {
    const std::size_t s_row = s / width_, s_col = s % width_;
    const std::size_t p_row = p / width_, p_col = p % width_;
    const std::uint32_t* srow = row_table_.data() + s_row * ksize_;
    const std::uint32_t* scol = col_table_.data() + s_col * ksize_;
    const std::uint32_t* prow = row_table_.data() + p_row * ksize_;
    const std::uint32_t* pcol = col_table_.data() + p_col * ksize_;
    const double* samples = cube_->samples().data();
    const std::size_t nb = bands_;

    double acc = 0.0;
    if (euclidean_) {
        std::size_t w_idx = 0;
        for (std::size_t tr = 0; tr < ksize_; ++tr) {
            const std::size_t base1 = static_cast<std::size_t>(srow[tr]) * width_;
            const std::size_t base2 = static_cast<std::size_t>(prow[tr]) * width_;
            for (std::size_t tc = 0; tc < ksize_; ++tc, ++w_idx) {
                const double* a = samples + (base1 + scol[tc]) * nb;
                const double* b = samples + (base2 + pcol[tc]) * nb;
                double t = 0.0;
                for (std::size_t i = 0; i < nb; ++i) {
                    const double d = a[i] - b[i];
                    t += d * d;
                }
                acc += uniform_kernel_ ? t : kernel_weights_[w_idx] * t;
            }
        }
    } else {
        std::size_t w_idx = 0;
        for (std::size_t tr = 0; tr < ksize_; ++tr) {
            const std::size_t base1 = static_cast<std::size_t>(srow[tr]) * width_;
            const std::size_t base2 = static_cast<std::size_t>(prow[tr]) * width_;
            for (std::size_t tc = 0; tc < ksize_; ++tc, ++w_idx) {
                const double* a = samples + (base1 + scol[tc]) * nb;
                const double* b = samples + (base2 + pcol[tc]) * nb;
                for (std::size_t i = 0; i < nb; ++i)
                    ws.diff(static_cast<Eigen::Index>(i)) = a[i] - b[i];
                const double t = ws.diff.dot(metric_ * ws.diff);
                acc += uniform_kernel_ ? t : kernel_weights_[w_idx] * t;
            }
        }
    }

    if (want_grad) {
        // v = sum_k w(k).c_k.d_k with d_k the patch difference at offset k and
        // c_k = [mirror(s-k)==s] - [mirror(p-k)==s]; the masks enumerate the
        // offsets where either indicator fires.
        ws.grad.setZero();
        const double* ys = samples + s * nb;
        auto weight_at = [&](std::size_t tr, std::size_t tc) {
            return uniform_kernel_ ? 1.0 : kernel_weights_[tr * ksize_ + tc];
        };
        const std::uint16_t mr_self = row_hits_[s_row * height_ + s_row];
        const std::uint16_t mc_self = col_hits_[s_col * width_ + s_col];
        for (std::uint16_t mr = mr_self; mr; mr &= static_cast<std::uint16_t>(mr - 1)) {
            const auto tr = static_cast<std::size_t>(std::countr_zero(mr));
            const std::size_t base2 = static_cast<std::size_t>(prow[tr]) * width_;
            for (std::uint16_t mc = mc_self; mc; mc &= static_cast<std::uint16_t>(mc - 1)) {
                const auto tc = static_cast<std::size_t>(std::countr_zero(mc));
                const double* b = samples + (base2 + pcol[tc]) * nb;
                const double w = weight_at(tr, tc);
                for (std::size_t i = 0; i < nb; ++i)
                    ws.grad(static_cast<Eigen::Index>(i)) += w * (ys[i] - b[i]);
            }
        }
        const std::uint16_t mr_other = row_hits_[p_row * height_ + s_row];
        const std::uint16_t mc_other = col_hits_[p_col * width_ + s_col];
        if (mr_other != 0 && mc_other != 0) {
            for (std::uint16_t mr = mr_other; mr; mr &= static_cast<std::uint16_t>(mr - 1)) {
                const auto tr = static_cast<std::size_t>(std::countr_zero(mr));
                const std::size_t base1 = static_cast<std::size_t>(srow[tr]) * width_;
                for (std::uint16_t mc = mc_other; mc; mc &= static_cast<std::uint16_t>(mc - 1)) {
                    const auto tc = static_cast<std::size_t>(std::countr_zero(mc));
                    const double* a = samples + (base1 + scol[tc]) * nb;
                    const double w = weight_at(tr, tc);
                    for (std::size_t i = 0; i < nb; ++i)
                        ws.grad(static_cast<Eigen::Index>(i)) -= w * (a[i] - ys[i]);
                }
            }
        }
    }
    return acc;
}

double FilterEngine::patch_distance(std::size_t s, std::size_t p) const {
    FilterWorkspace ws = make_workspace();
    return pair_distance_and_grad(s, p, ws, false);
}

double FilterEngine::chi(std::size_t s, std::size_t p) const {
    return std::exp(-patch_distance(s, p) * inv_h2_);
}

void FilterEngine::chi_gradient(std::size_t s, std::size_t p, FilterWorkspace& ws,
                                Eigen::VectorXd& out) const {
    const double d = pair_distance_and_grad(s, p, ws, true);
    const double x = std::exp(-d * inv_h2_);
    if (euclidean_)
        out = (-2.0 * inv_h2_ * x) * ws.grad;
    else
        out.noalias() = (-2.0 * inv_h2_ * x) * (metric_ * ws.grad);
}

void FilterEngine::restore_pixel(std::size_t s, std::span<const std::uint32_t> candidates,
                                 FilterWorkspace& ws, double* out) const {
    const double* samples = cube_->samples().data();
    const std::size_t nb = bands_;
    ws.numer.setZero();
    double c = 0.0;
    for (const std::uint32_t q : candidates) {
        const double d = pair_distance_and_grad(s, q, ws, false);
        const double x = std::exp(-d * inv_h2_);
        c += x;
        const double* y = samples + static_cast<std::size_t>(q) * nb;
        for (std::size_t i = 0; i < nb; ++i) ws.numer(static_cast<Eigen::Index>(i)) += x * y[i];
    }
    for (std::size_t i = 0; i < nb; ++i) out[i] = ws.numer(static_cast<Eigen::Index>(i)) / c;
}

double FilterEngine::restore_pixel_with_divergence(std::size_t s,
                                                   std::span<const std::uint32_t> candidates,
                                                   const Eigen::MatrixXd& psi,
                                                   FilterWorkspace& ws, double* out) const {
    const double* samples = cube_->samples().data();
    const std::size_t nb = bands_;
    const auto pe = static_cast<Eigen::Index>(nb);
    ws.numer.setZero();
    ws.s1.setZero();
    ws.m2.setZero();
    double c = 0.0;
    for (const std::uint32_t q : candidates) {
        const double d = pair_distance_and_grad(s, q, ws, true);
        const double x = std::exp(-d * inv_h2_);
        c += x;
        Eigen::Map<const Eigen::VectorXd> y(samples + static_cast<std::size_t>(q) * nb, pe);
        ws.numer += x * y;
        if (euclidean_)
            ws.scaled = (-2.0 * inv_h2_ * x) * ws.grad;
        else
            ws.scaled.noalias() = (-2.0 * inv_h2_ * x) * (metric_ * ws.grad);
        ws.s1 += ws.scaled;
        ws.m2.noalias() += y * ws.scaled.transpose();
    }
    for (Eigen::Index i = 0; i < pe; ++i) out[static_cast<std::size_t>(i)] = ws.numer(i) / c;

    // J(i,j) = (m2(i,j) + delta_ij.chi(s))/C - numer_i.s1_j/C^2 with chi(s)=1;
    // contract against psi.
    const double inv_c = 1.0 / c;
    double div = 0.0;
    for (Eigen::Index i = 0; i < pe; ++i)
        for (Eigen::Index j = 0; j < pe; ++j) {
            const double jacobian = (ws.m2(i, j) + (i == j ? 1.0 : 0.0)) * inv_c -
                                    ws.numer(i) * ws.s1(j) * inv_c * inv_c;
            div += psi(i, j) * jacobian;
        }
    return div;
}

namespace {

std::size_t checked_index(const SpectralCube& cube, PixelCoord c, const char* what) {
    if (c.row >= cube.height() || c.col >= cube.width())
        throw std::invalid_argument(std::string(what) + ": pixel out of bounds");
    return cube.pixel_index(c);
}

std::vector<std::uint32_t> all_pixels(std::size_t n) {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    return all;
}

}  // namespace

double patch_distance(const SpectralCube& cube, PixelCoord s, PixelCoord p,
                      const FilterParams& params) {
    const std::size_t si = checked_index(cube, s, "patch_distance");
    const std::size_t pi = checked_index(cube, p, "patch_distance");
    return FilterEngine(cube, params).patch_distance(si, pi);
}

std::vector<double> vnlm_weights(const SpectralCube& cube, PixelCoord s,
                                 std::span<const PixelCoord> candidates,
                                 const FilterParams& params) {
    if (candidates.empty())
        throw std::invalid_argument("vnlm_weights: candidate list is empty");
    const std::size_t si = checked_index(cube, s, "vnlm_weights");
    bool has_self = false;
    std::vector<std::uint32_t> idx(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        idx[k] = static_cast<std::uint32_t>(checked_index(cube, candidates[k], "vnlm_weights"));
        has_self = has_self || idx[k] == si;
    }
    if (!has_self)
        throw std::invalid_argument("vnlm_weights: candidate list must include the pixel itself");

    const FilterEngine engine(cube, params);
    std::vector<double> chis(idx.size());
    double c = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        chis[k] = engine.chi(si, idx[k]);
        c += chis[k];
    }
    for (double& v : chis) v /= c;
    return chis;
}

namespace {

SpectralCube run_denoise(const SpectralCube& cube, const FilterParams& params,
                         const CandidateSets* candidates) {
    if (candidates &&
        (candidates->height() != cube.height() || candidates->width() != cube.width()))
        throw std::invalid_argument("vnlm_denoise: candidate sets sized for another cube");
    const FilterEngine engine(cube, params);
    const std::size_t n = cube.pixel_count();
    std::vector<std::uint32_t> all;
    if (!candidates) all = all_pixels(n);
    SpectralCube out(cube.height(), cube.width(), cube.bands());
    double* dst = out.samples().data();
    const std::size_t nb = cube.bands();
    parallel_chunks(n, [&](std::size_t begin, std::size_t end) {
        FilterWorkspace ws = engine.make_workspace();
        for (std::size_t s = begin; s < end; ++s) {
            const std::span<const std::uint32_t> list =
                candidates ? candidates->candidates(s) : std::span<const std::uint32_t>(all);
            engine.restore_pixel(s, list, ws, dst + s * nb);
        }
    });
    return out;
}

}  // namespace

SpectralCube vnlm_denoise(const SpectralCube& cube, const FilterParams& params) {
    return run_denoise(cube, params, nullptr);
}

SpectralCube vnlm_denoise(const SpectralCube& cube, const FilterParams& params,
                          const CandidateSets& candidates) {
    return run_denoise(cube, params, &candidates);
}

SpectralCube scalar_nlm_denoise(const SpectralCube& band, double h, double a,
                                std::ptrdiff_t patch_radius) {
    if (band.bands() != 1)
        throw std::invalid_argument("scalar_nlm_denoise: input must have a single band");
    FilterParams params;
    params.h = h;
    params.patch_radius = patch_radius;
    params.kernel = PatchKernel::gaussian;
    params.kernel_sigma = a;
    return vnlm_denoise(band, params);
}

}  // namespace ovnlm
