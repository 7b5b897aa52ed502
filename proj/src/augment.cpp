#include "segbench/augment.hpp"

#include <cmath>

namespace segbench::augment {

AugmentParams sample_params(RngStream& rng) {
    AugmentParams p;
    p.hflip = rng.bernoulli(0.5);
    p.vflip = rng.bernoulli(0.5);
    p.angle_deg = rng.uniform(-180.0, 180.0);
    p.scale = rng.uniform(0.5, 1.5);
    return p;
}

namespace {

struct InverseMap {
    double cy, cx;     // image center
    double cos_t, sin_t;
    double inv_scale;
    double fx, fy;     // flip signs

    // output pixel -> source coordinates
    void operator()(double oy, double ox, double& sy, double& sx) const {
        const double dx = (ox - cx) * inv_scale;
        const double dy = (oy - cy) * inv_scale;
        // inverse rotation (by -theta)
        const double rx = dx * cos_t + dy * sin_t;
        const double ry = -dx * sin_t + dy * cos_t;
        sx = cx + rx * fx;
        sy = cy + ry * fy;
    }
};

InverseMap make_inverse(const Image& img, const AugmentParams& p) {
    const double theta = p.angle_deg * M_PI / 180.0;
    return InverseMap{(img.rows - 1) / 2.0, (img.cols - 1) / 2.0,
                      std::cos(theta),      std::sin(theta),
                      1.0 / p.scale,        p.hflip ? -1.0 : 1.0,
                      p.vflip ? -1.0 : 1.0};
}

} // namespace

std::pair<Image, MaskGrid> apply(const Image& image, const MaskGrid& mask,
                                 const AugmentParams& p) {
    require_same_shape(image.rows, image.cols, mask.rows, mask.cols, "augment::apply");
    const InverseMap inv = make_inverse(image, p);

    Image out_img(image.rows, image.cols);
    MaskGrid out_mask(mask.rows, mask.cols);
    for (int oy = 0; oy < image.rows; ++oy)
        for (int ox = 0; ox < image.cols; ++ox) {
            double sy, sx;
            inv(oy, ox, sy, sx);

            // image: bilinear with zero padding
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double wy = sy - y0, wx = sx - x0;
            double acc = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int yy = y0 + dy, xx = x0 + dx;
                    if (yy < 0 || yy >= image.rows || xx < 0 || xx >= image.cols) continue;
                    const double w = (dy ? wy : 1 - wy) * (dx ? wx : 1 - wx);
                    acc += w * image.at(yy, xx);
                }
            out_img.at(oy, ox) = static_cast<float>(acc);

            // mask: nearest with zero padding
            const int ny = static_cast<int>(std::lround(sy));
            const int nx = static_cast<int>(std::lround(sx));
            out_mask.at(oy, ox) =
                (ny >= 0 && ny < mask.rows && nx >= 0 && nx < mask.cols) ? mask.at(ny, nx) : 0;
        }
    return {std::move(out_img), std::move(out_mask)};
}

} // namespace segbench::augment
