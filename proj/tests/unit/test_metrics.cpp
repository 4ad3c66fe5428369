#include <doctest.h>

#include <cmath>

#include "stainlab/error.hpp"
#include "stainlab/metrics.hpp"
#include "stainlab/png_io.hpp"
#include "support.hpp"

using namespace stainlab;
using namespace stainlab::metrics;

namespace {

// Direct SSIM: full 2-D Gaussian window per output pixel, no separability.
double ssim_oracle(const Image& a, const Image& b) {
    const int n = 11;
    const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    std::vector<double> w(n * n);
    double sum = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) sum += w[i * n + j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
    for (auto& v : w) v /= sum;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        double chan = 0;
        int count = 0;
        for (int y = 0; y + n <= a.height(); ++y)
            for (int x = 0; x + n <= a.width(); ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double wa = a.at(x + j, y + i, c), wb = b.at(x + j, y + i, c), k = w[i * n + j];
                        ma += k * wa, mb += k * wb, saa += k * wa * wa, sbb += k * wb * wb, sab += k * wa * wb;
                    }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                chan += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += chan / count;
    }
    return total / 3;
}

Image inverted(const Image& x) {
    Image y = x;
    for (auto& v : y.pixels()) v = 1.0f - v;
    return y;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("ssim examples") {
    rng::Engine e(1);
    const Image x = testing::random_image(e, 32, 32);
    CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-9);
    CHECK(ssim(x, inverted(x)) < 0.1);
    const Image c = testing::constant_image(16, 16, 0.4f, 0.4f, 0.4f);
    CHECK(std::abs(ssim(c, c) - 1.0) <= 1e-9);
    CHECK_THROWS_AS(ssim(x, testing::random_image(e, 32, 31)), ContractError);
    CHECK_THROWS_AS(ssim(testing::random_image(e, 10, 10), testing::random_image(e, 10, 10)), ContractError);
}

TEST_CASE("ssim matches the direct-window oracle") {
    rng::Engine e(2);
    for (int t = 0; t < 10; ++t) {
        const Image a = testing::random_image(e, 12 + int(rng::below(e, 12)), 12 + int(rng::below(e, 12)));
        Image b = a;
        for (auto& v : b.pixels()) v = float(std::clamp(v + rng::uniform(e, -0.3, 0.3), 0.0, 1.0));
        CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("ssim symmetry, range and flip invariance") {
    rng::Engine e(3);
    for (int t = 0; t < 20; ++t) {
        const Image a = testing::random_image(e, 24, 20);
        const Image b = t % 2 ? testing::random_image(e, 24, 20) : inverted(a);
        const double s = ssim(a, b);
        CHECK(std::abs(s - ssim(b, a)) <= 1e-9);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK(ssim(a.flipped_horizontal(), b.flipped_horizontal()) == doctest::Approx(s).epsilon(1e-9));
        CHECK(ssim(a.flipped_vertical(), b.flipped_vertical()) == doctest::Approx(s).epsilon(1e-9));
    }
}

TEST_CASE("image_cc uses the shared Pearson definition") {
    rng::Engine e(4);
    const Image a = testing::random_image(e, 8, 8);
    CHECK(image_cc(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(image_cc(a, inverted(a)) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(image_cc(testing::constant_image(8, 8, 0.2f, 0.2f, 0.2f), a) == 0.0);
}

TEST_CASE("seam_discontinuity counts only excess jumps at tile seams") {
    // reference is a horizontal ramp; the output adds a step of 0.2 at x = 4
    Image ref(8, 4), out(8, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) {
                ref.at(x, y, c) = 0.1f * float(x);
                out.at(x, y, c) = 0.1f * float(x) + (x >= 4 ? 0.2f : 0.0f);
            }
    CHECK(seam_discontinuity(ref, ref, 4) == 0.0);
    // only the vertical seam at x = 4 exists in a 4-row image; each of its samples carries 0.2
    CHECK(seam_discontinuity(out, ref, 4) == doctest::Approx(0.2).epsilon(1e-6));
    // with tile 2 the seams at x = 2, 4, 6 and y = 2 give (12 * 0.2) / (36 + 24)
    CHECK(seam_discontinuity(out, ref, 2) == doctest::Approx(0.2 * 12 / 60).epsilon(1e-6));
    CHECK(seam_discontinuity(out, ref, 3) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("report aggregate equals recomputation and survives JSON") {
    rng::Engine e(5);
    MetricsReport r;
    for (int i = 0; i < 17; ++i)
        r.per_patch.push_back({"s", i, 2 * i, rng::uniform(e, -1, 1), rng::uniform(e, -1, 1)});
    r.recompute_aggregate();
    double ms = 0, mc = 0;
    for (const auto& p : r.per_patch) ms += p.ssim, mc += p.cc;
    CHECK(std::abs(r.aggregate.mean_ssim - ms / 17) <= 1e-9);
    CHECK(std::abs(r.aggregate.mean_cc - mc / 17) <= 1e-9);
    const auto back = MetricsReport::from_json(r.to_json());
    CHECK(back.per_patch.size() == 17);
    CHECK(back.aggregate.mean_ssim == r.aggregate.mean_ssim);
    CHECK(back.aggregate.count == 17);
}

TEST_CASE("evaluate identical and incomplete directories") {
    testing::TempDir dir("eval");
    rng::Engine e(6);
    std::vector<patch::IndexEntry> index;
    for (int i = 0; i < 4; ++i) {
        const std::string rel = "patches/s/" + std::to_string(i) + "_stained.png";
        std::filesystem::create_directories(dir / "target/patches/s");
        std::filesystem::create_directories(dir / "gen/patches/s");
        const Image img = testing::random_u8_image(e, 16, 16);
        png::write(dir / ("target/" + rel), img);
        if (i != 2) png::write(dir / ("gen/" + rel), img);
        index.push_back({"s", i, 0, "patches/s/" + std::to_string(i) + "_nonstained.png", rel});
    }
    const auto report = evaluate(dir / "gen", dir / "target", index);
    CHECK(report.aggregate.count == 3);
    CHECK(report.aggregate.mean_ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.aggregate.mean_cc == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(report.missing.size() == 1);
    CHECK(report.missing[0] == "patches/s/2_stained.png");
}

}  // TEST_SUITE
