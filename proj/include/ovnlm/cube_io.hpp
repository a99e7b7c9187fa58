#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovnlm/cube.hpp"

namespace ovnlm {

enum class io_errc {
    bad_magic,
    truncated,
    zero_dimension,
    non_finite_sample,
    io_failure,
    bad_pgm,
    dimension_mismatch,
};

class io_error : public std::runtime_error {
public:
    io_error(io_errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    io_errc code() const { return code_; }

private:
    io_errc code_;
};

// MSC1 container: "MSC1", then u32le H, L, P, then H*L*P float64le samples,
// row-major over (row, col) with bands innermost.
SpectralCube read_cube(const std::filesystem::path& path);
void write_cube(const SpectralCube& cube, const std::filesystem::path& path);

// Stacks binary PGM (P5) grayscale files of identical dimensions into a cube,
// band i taken from file i. 8-bit values land in [0,255], 16-bit in [0,65535].
SpectralCube import_band_stack(const std::vector<std::filesystem::path>& paths);

// Per-band PGM export, used by the convert command. Values are clamped to
// [0, maxval] and rounded; maxval is 255 unless the cube exceeds it.
void export_band_stack(const SpectralCube& cube, const std::string& prefix);

}  // namespace ovnlm
