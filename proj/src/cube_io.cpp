#include "ovnlm/cube_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ovnlm {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'C', '1'};

static_assert(std::endian::native == std::endian::little,
              "MSC1 I/O assumes a little-endian host");

std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

SpectralCube read_cube(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error(io_errc::io_failure, "cannot open " + path.string());

    std::array<unsigned char, 16> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (in.gcount() != static_cast<std::streamsize>(header.size()))
        throw io_error(io_errc::truncated, path.string() + ": truncated header");
    if (std::memcmp(header.data(), kMagic, 4) != 0)
        throw io_error(io_errc::bad_magic, path.string() + ": not an MSC1 container");

    const std::uint32_t h = read_u32le(header.data() + 4);
    const std::uint32_t l = read_u32le(header.data() + 8);
    const std::uint32_t p = read_u32le(header.data() + 12);
    if (h == 0 || l == 0 || p == 0)
        throw io_error(io_errc::zero_dimension, path.string() + ": zero dimension in header");

    const std::uint64_t count = static_cast<std::uint64_t>(h) * l * p;
    std::vector<double> samples(count);
    in.read(reinterpret_cast<char*>(samples.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
        throw io_error(io_errc::truncated, path.string() + ": truncated sample payload");

    for (double v : samples)
        if (!std::isfinite(v))
            throw io_error(io_errc::non_finite_sample, path.string() + ": non-finite sample");

    return SpectralCube::from_samples(h, l, p, std::move(samples));
}

void write_cube(const SpectralCube& cube, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error(io_errc::io_failure, "cannot open " + path.string() + " for writing");

    out.write(kMagic, 4);
    write_u32le(out, static_cast<std::uint32_t>(cube.height()));
    write_u32le(out, static_cast<std::uint32_t>(cube.width()));
    write_u32le(out, static_cast<std::uint32_t>(cube.bands()));
    const auto samples = cube.samples();
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size() * sizeof(double)));
    if (!out)
        throw io_error(io_errc::io_failure, "write failed for " + path.string());
}

namespace {

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 0;
    std::vector<double> pixels;  // row-major
};

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            break;
        }
    }
    while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
    return tok;
}

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error(io_errc::io_failure, "cannot open " + path.string());

    if (pgm_token(in) != "P5")
        throw io_error(io_errc::bad_pgm, path.string() + ": not a binary PGM (P5) file");

    PgmImage img;
    try {
        img.width = std::stoul(pgm_token(in));
        img.height = std::stoul(pgm_token(in));
        img.maxval = static_cast<unsigned>(std::stoul(pgm_token(in)));
    } catch (const std::exception&) {
        throw io_error(io_errc::bad_pgm, path.string() + ": malformed PGM header");
    }
    if (img.width == 0 || img.height == 0)
        throw io_error(io_errc::zero_dimension, path.string() + ": zero dimension");
    if (img.maxval == 0 || img.maxval > 65535)
        throw io_error(io_errc::bad_pgm, path.string() + ": unsupported maxval");

    const std::size_t count = img.width * img.height;
    const bool wide = img.maxval > 255;
    std::vector<unsigned char> raw(count * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw io_error(io_errc::truncated, path.string() + ": truncated PGM payload");

    img.pixels.resize(count);
    if (wide) {
        // 16-bit PGM samples are big-endian
        for (std::size_t i = 0; i < count; ++i)
            img.pixels[i] = static_cast<double>((static_cast<unsigned>(raw[2 * i]) << 8) |
                                                raw[2 * i + 1]);
    } else {
        for (std::size_t i = 0; i < count; ++i) img.pixels[i] = raw[i];
    }
    return img;
}

}  // namespace

SpectralCube import_band_stack(const std::vector<std::filesystem::path>& paths) {
    if (paths.empty())
        throw io_error(io_errc::io_failure, "import_band_stack: no input files");

    std::vector<PgmImage> bands;
    bands.reserve(paths.size());
    for (const auto& path : paths) {
        bands.push_back(read_pgm(path));
        if (bands.back().width != bands.front().width ||
            bands.back().height != bands.front().height)
            throw io_error(io_errc::dimension_mismatch,
                           path.string() + ": dimensions differ from first band");
    }

    const std::size_t h = bands.front().height;
    const std::size_t l = bands.front().width;
    const std::size_t p = bands.size();
    SpectralCube cube(h, l, p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < l; ++c)
                cube.at(r, c, i) = bands[i].pixels[r * l + c];
    return cube;
}

void export_band_stack(const SpectralCube& cube, const std::string& prefix) {
    const unsigned maxval = cube.max_value() > 255.0 ? 65535u : 255u;
    for (std::size_t i = 0; i < cube.bands(); ++i) {
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "_band%03zu.pgm", i);
        const std::filesystem::path path = prefix + suffix;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error(io_errc::io_failure, "cannot open " + path.string() + " for writing");
        out << "P5\n" << cube.width() << " " << cube.height() << "\n" << maxval << "\n";
        for (std::size_t r = 0; r < cube.height(); ++r) {
            for (std::size_t c = 0; c < cube.width(); ++c) {
                double v = std::round(cube.at(r, c, i));
                v = std::min(std::max(v, 0.0), static_cast<double>(maxval));
                const auto q = static_cast<unsigned>(v);
                if (maxval > 255) {
                    const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                                    static_cast<unsigned char>(q & 0xff)};
                    out.write(reinterpret_cast<const char*>(bytes), 2);
                } else {
                    const auto b = static_cast<unsigned char>(q);
                    out.write(reinterpret_cast<const char*>(&b), 1);
                }
            }
        }
        if (!out)
            throw io_error(io_errc::io_failure, "write failed for " + path.string());
    }
}

}  // namespace ovnlm
