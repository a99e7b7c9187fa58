#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ovnlm {

struct PixelCoord {
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

// H x L x P image cube, band-interleaved by pixel so that the P-vector of a
// pixel is contiguous. Samples are 64-bit reals; 8/16-bit inputs are promoted
// on ingest.
class SpectralCube {
public:
    SpectralCube() = default;

    SpectralCube(std::size_t height, std::size_t width, std::size_t bands)
        : height_(height), width_(width), bands_(bands),
          samples_(checked_size(height, width, bands), 0.0) {}

    static SpectralCube from_samples(std::size_t height, std::size_t width,
                                     std::size_t bands, std::vector<double> samples) {
        SpectralCube cube;
        cube.height_ = height;
        cube.width_ = width;
        cube.bands_ = bands;
        if (samples.size() != checked_size(height, width, bands))
            throw std::invalid_argument("SpectralCube: sample count does not match H*L*P");
        for (double v : samples)
            if (!std::isfinite(v))
                throw std::invalid_argument("SpectralCube: non-finite sample");
        cube.samples_ = std::move(samples);
        return cube;
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t bands() const { return bands_; }
    std::size_t pixel_count() const { return height_ * width_; }
    std::size_t sample_count() const { return samples_.size(); }

    std::size_t pixel_index(std::size_t row, std::size_t col) const {
        return row * width_ + col;
    }
    std::size_t pixel_index(PixelCoord c) const { return pixel_index(c.row, c.col); }

    double& at(std::size_t row, std::size_t col, std::size_t band) {
        return samples_[(row * width_ + col) * bands_ + band];
    }
    double at(std::size_t row, std::size_t col, std::size_t band) const {
        return samples_[(row * width_ + col) * bands_ + band];
    }

    // Contiguous P-vector of one pixel.
    std::span<double> pixel(std::size_t index) {
        return {samples_.data() + index * bands_, bands_};
    }
    std::span<const double> pixel(std::size_t index) const {
        return {samples_.data() + index * bands_, bands_};
    }
    std::span<const double> pixel(std::size_t row, std::size_t col) const {
        return pixel(pixel_index(row, col));
    }

    std::span<double> samples() { return samples_; }
    std::span<const double> samples() const { return samples_; }

    double band_max(std::size_t band) const {
        double m = at(0, 0, band);
        for (std::size_t i = 1; i < pixel_count(); ++i)
            m = std::max(m, samples_[i * bands_ + band]);
        return m;
    }

    double max_value() const {
        double m = samples_.empty() ? 0.0 : samples_[0];
        for (double v : samples_) m = std::max(m, v);
        return m;
    }

    bool same_shape(const SpectralCube& other) const {
        return height_ == other.height_ && width_ == other.width_ && bands_ == other.bands_;
    }

    friend bool operator==(const SpectralCube&, const SpectralCube&) = default;

private:
    static std::size_t checked_size(std::size_t h, std::size_t l, std::size_t p) {
        if (h == 0 || l == 0 || p == 0)
            throw std::invalid_argument("SpectralCube: dimensions must be >= 1");
        return h * l * p;
    }

    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t bands_ = 0;
    std::vector<double> samples_;
};

// Symmetric mirror extension (edge repeated): -1 -> 0, n -> n-1. Valid for
// offsets of any magnitude.
inline std::ptrdiff_t mirror_coord(std::ptrdiff_t x, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * n;
    x %= period;
    if (x < 0) x += period;
    return x < n ? x : period - 1 - x;
}

}  // namespace ovnlm
