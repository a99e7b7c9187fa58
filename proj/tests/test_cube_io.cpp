#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "ovnlm/cube_io.hpp"
#include "test_support.hpp"

using namespace ovnlm;
using test_support::TempDir;

namespace {

// Reference mirror extension: step-by-step reflection with edge repeat.
std::ptrdiff_t mirror_oracle(std::ptrdiff_t x, std::ptrdiff_t n) {
    while (x < 0 || x >= n) {
        if (x < 0) x = -x - 1;
        if (x >= n) x = 2 * n - 1 - x;
    }
    return x;
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("mirror_coord matches stepwise reflection") {
    for (std::ptrdiff_t n = 1; n <= 6; ++n)
        for (std::ptrdiff_t x = -30; x <= 30; ++x)
            CHECK(mirror_coord(x, n) == mirror_oracle(x, n));
}

TEST_CASE("mirror_coord edge repeat") {
    CHECK(mirror_coord(-1, 8) == 0);
    CHECK(mirror_coord(8, 8) == 7);
    CHECK(mirror_coord(-2, 8) == 1);
    CHECK(mirror_coord(9, 8) == 6);
}

TEST_CASE("cube round trip preserves every sample") {
    TempDir dir;
    const SpectralCube cube = test_support::random_cube(9, 7, 4, 42);
    write_cube(cube, dir.file("a.msc1"));
    const SpectralCube back = read_cube(dir.file("a.msc1"));
    CHECK(back == cube);
}

TEST_CASE("container layout is magic, u32le dims, float64le samples") {
    TempDir dir;
    SpectralCube cube(1, 2, 1);
    cube.at(0, 0, 0) = 1.0;
    cube.at(0, 1, 0) = -2.5;
    write_cube(cube, dir.file("a.msc1"));

    const std::vector<char> bytes = slurp(dir.file("a.msc1"));
    REQUIRE(bytes.size() == 16 + 2 * 8);
    CHECK(std::string(bytes.data(), 4) == "MSC1");
    const auto u32 = [&](std::size_t off) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
    };
    CHECK(u32(4) == 1);
    CHECK(u32(8) == 2);
    CHECK(u32(12) == 1);
    double v0 = 0.0, v1 = 0.0;
    std::memcpy(&v0, bytes.data() + 16, 8);
    std::memcpy(&v1, bytes.data() + 24, 8);
    CHECK(v0 == 1.0);
    CHECK(v1 == -2.5);
}

TEST_CASE("read_cube rejects bad input") {
    TempDir dir;
    const SpectralCube cube = test_support::random_cube(3, 3, 2, 1);
    write_cube(cube, dir.file("good.msc1"));
    std::vector<char> bytes = slurp(dir.file("good.msc1"));

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        spit(dir.file("bad.msc1"), bytes);
        try {
            read_cube(dir.file("bad.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::bad_magic);
        }
    }
    SUBCASE("truncated payload") {
        bytes.resize(bytes.size() - 5);
        spit(dir.file("bad.msc1"), bytes);
        try {
            read_cube(dir.file("bad.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::truncated);
        }
    }
    SUBCASE("truncated header") {
        bytes.resize(10);
        spit(dir.file("bad.msc1"), bytes);
        try {
            read_cube(dir.file("bad.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::truncated);
        }
    }
    SUBCASE("zero dimension") {
        bytes[8] = bytes[9] = bytes[10] = bytes[11] = 0;
        spit(dir.file("bad.msc1"), bytes);
        try {
            read_cube(dir.file("bad.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::zero_dimension);
        }
    }
    SUBCASE("non-finite sample") {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        std::memcpy(bytes.data() + 16, &nan, 8);
        spit(dir.file("bad.msc1"), bytes);
        try {
            read_cube(dir.file("bad.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::non_finite_sample);
        }
    }
    SUBCASE("missing file") {
        try {
            read_cube(dir.file("absent.msc1"));
            FAIL("expected io_error");
        } catch (const io_error& e) {
            CHECK(e.code() == io_errc::io_failure);
        }
    }
}

TEST_CASE("pgm band stack round trip, 8-bit") {
    TempDir dir;
    SpectralCube cube(5, 4, 3);
    std::uint64_t state = 7;
    for (double& v : cube.samples())
        v = static_cast<double>(test_support::splitmix(state) % 256);

    export_band_stack(cube, (dir.path / "img").string());
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < 3; ++i) {
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "img_band%03d.pgm", i);
        paths.push_back(dir.path / suffix);
        CHECK(std::filesystem::exists(paths.back()));
    }
    const SpectralCube back = import_band_stack(paths);
    CHECK(back == cube);
}

TEST_CASE("pgm export switches to 16-bit when values exceed 255") {
    TempDir dir;
    SpectralCube cube(2, 2, 1);
    cube.at(0, 0, 0) = 1000.0;
    cube.at(0, 1, 0) = 0.0;
    cube.at(1, 0, 0) = 65535.0;
    cube.at(1, 1, 0) = 255.0;
    export_band_stack(cube, (dir.path / "wide").string());
    const SpectralCube back = import_band_stack({dir.path / "wide_band000.pgm"});
    CHECK(back == cube);
}

TEST_CASE("import_band_stack rejects mismatched dimensions") {
    TempDir dir;
    export_band_stack(test_support::random_cube(4, 4, 1, 2, 0, 255), (dir.path / "a").string());
    export_band_stack(test_support::random_cube(5, 4, 1, 3, 0, 255), (dir.path / "b").string());
    try {
        import_band_stack({dir.path / "a_band000.pgm", dir.path / "b_band000.pgm"});
        FAIL("expected io_error");
    } catch (const io_error& e) {
        CHECK(e.code() == io_errc::dimension_mismatch);
    }
}

TEST_CASE("import_band_stack rejects non-pgm bytes") {
    TempDir dir;
    spit(dir.file("junk.pgm"), {'P', '6', '\n', '1', ' ', '1', '\n'});
    try {
        import_band_stack({dir.file("junk.pgm")});
        FAIL("expected io_error");
    } catch (const io_error& e) {
        CHECK(e.code() == io_errc::bad_pgm);
    }
}

TEST_CASE("SpectralCube construction guards") {
    CHECK_THROWS_AS(SpectralCube(0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(SpectralCube::from_samples(2, 2, 1, {1.0, 2.0, 3.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        SpectralCube::from_samples(1, 1, 1, {std::numeric_limits<double>::infinity()}),
        std::invalid_argument);
}
