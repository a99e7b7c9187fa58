#include "ovnlm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "ovnlm/parallel.hpp"

namespace ovnlm {

namespace {

// No-op for matrices that are already PSD so exact entries survive a
// construct/serialize round trip; otherwise clips negative eigenvalues.
Eigen::MatrixXd project_psd(Eigen::MatrixXd m) {
    m = ((m + m.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.eigenvalues().minCoeff() >= 0.0) return m;
    Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd r =
        eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    return ((r + r.transpose()) / 2.0).eval();
}

}  // namespace

NoiseCovariance::NoiseCovariance(Eigen::MatrixXd entries) {
    if (entries.rows() == 0 || entries.rows() != entries.cols())
        throw std::invalid_argument("NoiseCovariance: matrix must be square and non-empty");
    const double scale = entries.cwiseAbs().maxCoeff();
    if ((entries - entries.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(scale, 1.0))
        throw std::invalid_argument("NoiseCovariance: matrix is not symmetric");
    entries_ = project_psd(std::move(entries));
    // Clipping can leave -0.0 or tiny negative roundoff on the diagonal.
    for (Eigen::Index i = 0; i < entries_.rows(); ++i)
        entries_(i, i) = std::max(entries_(i, i), 0.0);
}

NoiseCovariance NoiseCovariance::isotropic(std::size_t bands, double variance) {
    if (variance < 0.0)
        throw std::invalid_argument("NoiseCovariance: negative variance");
    return NoiseCovariance(
        variance * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(bands),
                                             static_cast<Eigen::Index>(bands)));
}

NoiseCovariance NoiseCovariance::zero(std::size_t bands) {
    return NoiseCovariance(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bands),
                                                 static_cast<Eigen::Index>(bands)));
}

Eigen::MatrixXd NoiseCovariance::symmetric_sqrt() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(entries_);
    Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

NoiseCovariance read_covariance_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open covariance file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty covariance file");
    const auto p = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        if (rows[static_cast<std::size_t>(i)].size() != rows.size())
            throw std::runtime_error(path.string() + ": covariance rows are not square");
        for (Eigen::Index j = 0; j < p; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return NoiseCovariance(m);
}

void write_covariance_csv(const NoiseCovariance& cov, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto& m = cov.entries();
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << buf << (j + 1 < m.cols() ? "," : "\n");
        }
    }
}

namespace {

// SplitMix64: counter-based stream keyed by (seed, pixel), deterministic and
// partition-independent.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class PixelRng {
public:
    PixelRng(std::uint64_t seed, std::uint64_t pixel)
        : state_(splitmix64(seed ^ splitmix64(pixel + 0x6a09e667f3bcc909ULL))) {}

    double uniform_open() {
        // in (0, 1]
        state_ = splitmix64(state_);
        return static_cast<double>((state_ >> 11) + 1) * 0x1p-53;
    }

    // Box-Muller pair
    void normal_pair(double& z0, double& z1) {
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        z0 = radius * std::cos(angle);
        z1 = radius * std::sin(angle);
    }

private:
    std::uint64_t state_;
};

}  // namespace

SpectralCube add_gaussian_noise(const SpectralCube& cube, const NoiseCovariance& cov,
                                std::uint64_t seed) {
    if (cov.bands() != cube.bands())
        throw std::invalid_argument("add_gaussian_noise: covariance band count mismatch");

    const std::size_t p = cube.bands();
    const Eigen::MatrixXd root = cov.symmetric_sqrt();

    SpectralCube out = cube;
    parallel_chunks(cube.pixel_count(), [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd z(static_cast<Eigen::Index>(p));
        for (std::size_t s = begin; s < end; ++s) {
            PixelRng rng(seed, s);
            for (std::size_t i = 0; i + 1 < p; i += 2)
                rng.normal_pair(z(static_cast<Eigen::Index>(i)),
                                z(static_cast<Eigen::Index>(i + 1)));
            if (p % 2 == 1) {
                double z0, z1;
                rng.normal_pair(z0, z1);
                z(static_cast<Eigen::Index>(p - 1)) = z0;
            }
            const Eigen::VectorXd n = root * z;
            auto pixel = out.pixel(s);
            for (std::size_t i = 0; i < p; ++i) pixel[i] += n(static_cast<Eigen::Index>(i));
        }
    });
    return out;
}

double sigma_for_target_psnr(const SpectralCube& cube, double target_psnr_db) {
    if (!std::isfinite(target_psnr_db))
        throw std::invalid_argument("sigma_for_target_psnr: target must be finite");
    const double peak = cube.max_value();
    if (peak <= 0.0)
        throw std::invalid_argument("sigma_for_target_psnr: cube maximum must be positive");
    return peak * std::pow(10.0, -target_psnr_db / 20.0);
}

namespace {

double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return (lo + hi) / 2.0;
}

// 1.4826 * median(|x - median(x)|)
double scaled_mad(std::vector<double>& v) {
    std::vector<double> tmp = v;
    const double med = median_inplace(tmp);
    for (std::size_t i = 0; i < v.size(); ++i) tmp[i] = std::abs(v[i] - med);
    return 1.4826 * median_inplace(tmp);
}

}  // namespace

NoiseCovariance estimate_noise_covariance_mad(const SpectralCube& cube) {
    if (cube.pixel_count() < 2)
        throw std::invalid_argument("estimate_noise_covariance_mad: need at least 2 pixels");

    const std::size_t p = cube.bands();
    const std::size_t n = cube.pixel_count();
    const auto samples = cube.samples();

    // Diagonal first: per-band scaled MAD, squared.
    std::vector<double> sigma(p, 0.0);
    parallel_chunks(p, [&](std::size_t begin, std::size_t end) {
        std::vector<double> band(n);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t s = 0; s < n; ++s) band[s] = samples[s * p + i];
            sigma[i] = scaled_mad(band);
        }
    });

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                              static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = sigma[i] * sigma[i];

    // Off-diagonals from MADs of a*I_i +- b*I_j with a, b the inverse band
    // scales. Zero-MAD bands carry no usable noise signal; their entries stay 0.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) pairs.emplace_back(i, j);

    bool degenerate = false;
    std::vector<double> offdiag(pairs.size(), 0.0);
    parallel_chunks(pairs.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> sum(n), diff(n);
        for (std::size_t k = begin; k < end; ++k) {
            const auto [i, j] = pairs[k];
            if (sigma[i] == 0.0 || sigma[j] == 0.0) {
                degenerate = true;
                continue;
            }
            const double a = 1.0 / sigma[i];
            const double b = 1.0 / sigma[j];
            for (std::size_t s = 0; s < n; ++s) {
                const double xi = a * samples[s * p + i];
                const double xj = b * samples[s * p + j];
                sum[s] = xi + xj;
                diff[s] = xi - xj;
            }
            const double mad_sum = scaled_mad(sum) / 1.4826;
            const double mad_diff = scaled_mad(diff) / 1.4826;
            offdiag[k] = 1.4826 * 1.4826 / (4.0 * a * b) *
                         (mad_sum * mad_sum - mad_diff * mad_diff);
        }
    });
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = offdiag[k];
        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = offdiag[k];
    }
    if (degenerate)
        std::cerr << "ovnlm: warning: zero-MAD band, off-diagonal covariance entries set to 0\n";

    return NoiseCovariance(m);
}

}  // namespace ovnlm
