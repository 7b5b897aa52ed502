#include "segbench/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "segbench/rng.hpp"

namespace segbench::dataio {

namespace {

struct Ellipse {
    double cy, cx, ry, rx, tilt;

    bool contains(double y, double x) const {
        const double ct = std::cos(tilt), st = std::sin(tilt);
        const double dy = y - cy, dx = x - cx;
        const double u = (ct * dx + st * dy) / rx;
        const double v = (-st * dx + ct * dy) / ry;
        return u * u + v * v <= 1.0;
    }
};

Slice make_slice(int shape, RngStream rng, bool balanced) {
    const double n = shape;
    Slice s;
    s.image = Image(shape, shape);
    s.target_mask = MaskGrid(shape, shape);
    MaskGrid lung(shape, shape);

    // two lung ellipses, left and right of center
    Ellipse lungs[2];
    for (int k = 0; k < 2; ++k) {
        const double side = k == 0 ? 0.30 : 0.70;
        lungs[k].cy = n * rng.uniform(0.42, 0.58);
        lungs[k].cx = n * (side + rng.uniform(-0.04, 0.04));
        lungs[k].ry = n * rng.uniform(0.22, 0.34);
        lungs[k].rx = n * rng.uniform(0.13, 0.20);
        lungs[k].tilt = rng.uniform(-0.2, 0.2);
    }
    for (int y = 0; y < shape; ++y)
        for (int x = 0; x < shape; ++x)
            if (lungs[0].contains(y, x) || lungs[1].contains(y, x)) lung.at(y, x) = 1;

    // lesion blobs seeded at lung pixels, clipped to the lung region
    std::vector<std::pair<int, int>> lung_px;
    for (int y = 0; y < shape; ++y)
        for (int x = 0; x < shape; ++x)
            if (lung.at(y, x)) lung_px.emplace_back(y, x);

    const int n_blobs = 1 + static_cast<int>(rng.next_below(3));
    const double lo = balanced ? 0.10 : 0.03;
    const double hi = balanced ? 0.30 : 0.10;
    if (!lung_px.empty()) {
        for (int k = 0; k < n_blobs; ++k) {
            auto [py, px] = lung_px[rng.next_below(lung_px.size())];
            Ellipse blob;
            blob.cy = py;
            blob.cx = px;
            blob.ry = std::max(1.5, n * rng.uniform(lo, hi));
            blob.rx = std::max(1.5, n * rng.uniform(lo, hi));
            blob.tilt = rng.uniform(-1.0, 1.0);
            for (int y = 0; y < shape; ++y)
                for (int x = 0; x < shape; ++x)
                    if (lung.at(y, x) && blob.contains(y, x)) s.target_mask.at(y, x) = 1;
        }
    }

    // raw Hounsfield-like intensities: soft tissue, air-filled lung,
    // ground-glass lesion offset, plus noise
    for (int y = 0; y < shape; ++y)
        for (int x = 0; x < shape; ++x) {
            double v = 50.0;
            if (lung.at(y, x)) v = -850.0;
            if (s.target_mask.at(y, x)) v = -300.0;
            v += rng.uniform(-40.0, 40.0);
            s.image.at(y, x) = static_cast<float>(std::clamp(v, -1000.0, 400.0));
        }

    s.lung_mask = std::move(lung);
    return s;
}

void fill_split(std::vector<Slice>& split, const char* split_name, int count, int shape,
                RngStream rng, bool balanced) {
    constexpr int kSlicesPerVolume = 4;
    for (int i = 0; i < count; ++i) {
        Slice s = make_slice(shape, rng.split(static_cast<uint64_t>(i)), balanced);
        s.volume_id = std::string(split_name) + "-v" + std::to_string(i / kSlicesPerVolume);
        s.slice_index = i % kSlicesPerVolume;
        split.push_back(std::move(s));
    }
}

} // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_slices < 3)
        throw ConfigError("generate_synthetic: need at least 3 slices (one per split), got " +
                          std::to_string(spec.n_slices));
    if (spec.shape < 8) throw ConfigError("generate_synthetic: shape must be >= 8");

    const int n_test = std::max(1, static_cast<int>(std::lround(spec.n_slices * 0.2)));
    const int rest = spec.n_slices - n_test;
    const int n_train = std::clamp(static_cast<int>(std::lround(rest * 0.8)), 1, rest - 1);
    const int n_val = rest - n_train;

    RngStream root(spec.seed);
    Dataset ds;
    ds.name = "synthetic-" + std::to_string(spec.seed);
    ds.normalization = {-500.0, 500.0};
    fill_split(ds.train, "train", n_train, spec.shape, root.split(1), spec.balanced);
    fill_split(ds.val, "val", n_val, spec.shape, root.split(2), spec.balanced);
    fill_split(ds.test, "test", n_test, spec.shape, root.split(3), spec.balanced);
    ds.validate();
    return ds;
}

} // namespace segbench::dataio
