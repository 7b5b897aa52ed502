#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "segbench/augment.hpp"

using namespace segbench;
using namespace segbench::augment;

namespace {

Image random_image(int r, int c, RngStream& rng) {
    Image img(r, c);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1, 1));
    return img;
}

MaskGrid random_mask(int r, int c, RngStream& rng) {
    MaskGrid m(r, c);
    for (auto& v : m.v) v = rng.bernoulli(0.4) ? 1 : 0;
    return m;
}

// In-test oracle: same inverse map, recomputed with scalar code.
void oracle_apply(const Image& img, const MaskGrid& mask, const AugmentParams& p, Image& oi,
                  MaskGrid& om) {
    const double cy = (img.rows - 1) / 2.0, cx = (img.cols - 1) / 2.0;
    const double th = p.angle_deg * M_PI / 180.0;
    oi = Image(img.rows, img.cols);
    om = MaskGrid(img.rows, img.cols);
    for (int oy = 0; oy < img.rows; ++oy)
        for (int ox = 0; ox < img.cols; ++ox) {
            double dx = (ox - cx) / p.scale, dy = (oy - cy) / p.scale;
            double rx = dx * std::cos(th) + dy * std::sin(th);
            double ry = -dx * std::sin(th) + dy * std::cos(th);
            double sx = cx + rx * (p.hflip ? -1 : 1);
            double sy = cy + ry * (p.vflip ? -1 : 1);
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            double acc = 0;
            for (int dyy = 0; dyy < 2; ++dyy)
                for (int dxx = 0; dxx < 2; ++dxx) {
                    int yy = y0 + dyy, xx = x0 + dxx;
                    if (yy < 0 || yy >= img.rows || xx < 0 || xx >= img.cols) continue;
                    acc += (dyy ? sy - y0 : 1 - (sy - y0)) * (dxx ? sx - x0 : 1 - (sx - x0)) *
                           img.at(yy, xx);
                }
            oi.at(oy, ox) = static_cast<float>(acc);
            int ny = static_cast<int>(std::lround(sy)), nx = static_cast<int>(std::lround(sx));
            om.at(oy, ox) = (ny >= 0 && ny < img.rows && nx >= 0 && nx < img.cols)
                                ? mask.at(ny, nx)
                                : 0;
        }
}

} // namespace

TEST_CASE("sample_params is deterministic per stream lineage") {
    RngStream a = RngStream(5).split(1);
    RngStream b = RngStream(5).split(1);
    AugmentParams pa = sample_params(a), pb = sample_params(b);
    CHECK(pa.hflip == pb.hflip);
    CHECK(pa.vflip == pb.vflip);
    CHECK(pa.angle_deg == pb.angle_deg);
    CHECK(pa.scale == pb.scale);
}

TEST_CASE("Monte Carlo parameter distribution bounds") {
    RngStream root(2024);
    int hflips = 0;
    double scale_sum = 0, angle_min = 1e9, angle_max = -1e9;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        RngStream s = root.split(i);
        AugmentParams p = sample_params(s);
        hflips += p.hflip ? 1 : 0;
        scale_sum += p.scale;
        angle_min = std::min(angle_min, p.angle_deg);
        angle_max = std::max(angle_max, p.angle_deg);
        REQUIRE(p.angle_deg >= -180.0);
        REQUIRE(p.angle_deg <= 180.0);
        REQUIRE(p.scale >= 0.5);
        REQUIRE(p.scale <= 1.5);
    }
    const double hf = static_cast<double>(hflips) / n;
    CHECK(hf >= 0.47);
    CHECK(hf <= 0.53);
    const double sm = scale_sum / n;
    CHECK(sm >= 0.98);
    CHECK(sm <= 1.02);
    CHECK(angle_min < -150.0); // range actually exercised
    CHECK(angle_max > 150.0);
}

TEST_CASE("identity params leave image and mask untouched") {
    RngStream rng(7);
    Image img = random_image(12, 10, rng);
    MaskGrid m = random_mask(12, 10, rng);
    AugmentParams p; // no flips, angle 0, scale 1
    auto [oi, om] = apply(img, m, p);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(oi.v[i] - img.v[i]) < 1e-12);
    CHECK(om == m);
}

TEST_CASE("hflip twice restores the original to 1e-12") {
    RngStream rng(8);
    Image img = random_image(9, 9, rng);
    MaskGrid m = random_mask(9, 9, rng);
    AugmentParams p;
    p.hflip = true;
    auto [o1, m1] = apply(img, m, p);
    auto [o2, m2] = apply(o1, m1, p);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(o2.v[i] - img.v[i]) < 1e-12);
    CHECK(m2 == m);
}

TEST_CASE("flips commute with 180-degree rotation on even sizes") {
    RngStream rng(9);
    Image img = random_image(8, 8, rng);
    MaskGrid m = random_mask(8, 8, rng);
    AugmentParams flips;
    flips.hflip = true;
    flips.vflip = true;
    AugmentParams rot;
    rot.angle_deg = 180.0;
    auto [oa, ma] = apply(img, m, flips);
    auto [ob, mb] = apply(img, m, rot);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(oa.v[i] - ob.v[i]) < 1e-12);
    CHECK(ma == mb);
}

TEST_CASE("scale 0.5 shrinks an all-ones mask to about 25% coverage") {
    const int n = 64;
    Image img(n, n, 1.0f);
    MaskGrid m(n, n, 1);
    AugmentParams p;
    p.scale = 0.5;
    auto [oi, om] = apply(img, m, p);
    int ones = 0;
    for (auto v : om.v) ones += v;
    const double frac = static_cast<double>(ones) / (n * n);
    CHECK(frac > 0.23);
    CHECK(frac < 0.27);
}

TEST_CASE("apply matches the scalar oracle on random parameter draws") {
    RngStream rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        Image img = random_image(11, 13, rng);
        MaskGrid m = random_mask(11, 13, rng);
        RngStream ps = rng.split(trial);
        AugmentParams p = sample_params(ps);
        auto [oi, om] = apply(img, m, p);
        Image ei;
        MaskGrid em;
        oracle_apply(img, m, p, ei, em);
        for (size_t i = 0; i < oi.v.size(); ++i) CHECK(std::abs(oi.v[i] - ei.v[i]) < 1e-6);
        CHECK(om == em);
    }
}

TEST_CASE("paired consistency and binary masks for arbitrary params") {
    RngStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Image img = random_image(10, 10, rng);
        MaskGrid m = random_mask(10, 10, rng);
        RngStream ps = rng.split(trial);
        AugmentParams p = sample_params(ps);
        auto [oi, om] = apply(img, m, p);
        CHECK(oi.rows == img.rows);
        CHECK(oi.cols == img.cols);
        for (auto v : om.v) CHECK(v <= 1);
    }
}

TEST_CASE("zero image stays zero for every transform") {
    Image z(8, 8, 0.0f);
    MaskGrid m(8, 8, 0);
    RngStream rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        RngStream ps = rng.split(trial);
        AugmentParams p = sample_params(ps);
        auto [oi, om] = apply(z, m, p);
        for (float v : oi.v) CHECK(v == 0.0f);
    }
}

TEST_CASE("shape mismatch is rejected") {
    Image img(8, 8);
    MaskGrid m(8, 9);
    CHECK_THROWS_AS(apply(img, m, AugmentParams{}), ShapeError);
}
