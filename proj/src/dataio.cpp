#include "segbench/dataio.hpp"

#include <algorithm>
#include <cmath>

namespace segbench::dataio {

Slice normalize(const Slice& s, double mu, double sigma) {
    if (!(sigma > 0)) throw ConfigError("normalize: sigma must be > 0");
    Slice out = s;
    for (float& v : out.image.v) v = static_cast<float>((v - mu) / sigma);
    return out;
}

Dataset normalize_dataset(const Dataset& ds) {
    Dataset out = ds;
    auto norm_split = [&](std::vector<Slice>& split) {
        for (auto& s : split) s = normalize(s, ds.normalization.mu, ds.normalization.sigma);
    };
    norm_split(out.train);
    norm_split(out.val);
    norm_split(out.test);
    return out;
}

MaskGrid merge_positive_classes(const LabelGrid& labels) {
    MaskGrid out(labels.rows, labels.cols);
    for (size_t i = 0; i < labels.v.size(); ++i) {
        if (labels.v[i] < 0)
            throw ValidationError("merge_positive_classes: negative label " +
                                  std::to_string(labels.v[i]));
        out.v[i] = labels.v[i] > 0 ? 1 : 0;
    }
    return out;
}

namespace {

// align_corners=false source coordinate, clamped to the valid range.
inline double src_coord(int dst, int out_dim, int in_dim) {
    return (dst + 0.5) * static_cast<double>(in_dim) / out_dim - 0.5;
}

} // namespace

Image resize(const Image& img, int rows, int cols, ResizeMode mode) {
    if (rows < 1 || cols < 1)
        throw ConfigError("resize: target dims must be >= 1, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    Image out(rows, cols);
    for (int y = 0; y < rows; ++y) {
        const double sy = src_coord(y, rows, img.rows);
        for (int x = 0; x < cols; ++x) {
            const double sx = src_coord(x, cols, img.cols);
            if (mode == ResizeMode::Nearest) {
                const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, img.rows - 1);
                const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, img.cols - 1);
                out.at(y, x) = img.at(iy, ix);
            } else {
                const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, img.rows - 1);
                const int y1 = std::clamp(y0 + 1, 0, img.rows - 1);
                const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, img.cols - 1);
                const int x1 = std::clamp(x0 + 1, 0, img.cols - 1);
                const double wy = std::clamp(sy - std::floor(sy), 0.0, 1.0);
                const double wx = std::clamp(sx - std::floor(sx), 0.0, 1.0);
                out.at(y, x) = static_cast<float>(
                    (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                    wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1)));
            }
        }
    }
    return out;
}

MaskGrid resize_mask(const MaskGrid& mask, int rows, int cols) {
    if (rows < 1 || cols < 1) throw ConfigError("resize_mask: target dims must be >= 1");
    MaskGrid out(rows, cols);
    for (int y = 0; y < rows; ++y) {
        const int iy = std::clamp(static_cast<int>(std::lround(src_coord(y, rows, mask.rows))), 0,
                                  mask.rows - 1);
        for (int x = 0; x < cols; ++x) {
            const int ix = std::clamp(static_cast<int>(std::lround(src_coord(x, cols, mask.cols))),
                                      0, mask.cols - 1);
            out.at(y, x) = mask.at(iy, ix);
        }
    }
    return out;
}

Slice apply_lung_gate(const Slice& s) {
    if (!s.lung_mask)
        throw ConfigError("apply_lung_gate: slice " + s.volume_id + "#" +
                          std::to_string(s.slice_index) + " has no lung_mask");
    Slice out = s;
    for (size_t i = 0; i < out.image.v.size(); ++i)
        out.image.v[i] *= static_cast<float>(s.lung_mask->v[i]);
    return out;
}

std::pair<Image, MaskGrid> select_target(const Slice& s, ExperimentKind experiment) {
    switch (experiment) {
    case ExperimentKind::LungSegmentation:
        if (!s.lung_mask)
            throw ConfigError("lung-segmentation requires a lung_mask on slice " + s.volume_id +
                              "#" + std::to_string(s.slice_index));
        return {s.image, *s.lung_mask};
    case ExperimentKind::LesionSegmentationA:
        return {s.image, s.target_mask};
    case ExperimentKind::LesionSegmentationB: {
        Slice gated = apply_lung_gate(s);
        return {std::move(gated.image), s.target_mask};
    }
    }
    throw ConfigError("bad ExperimentKind");
}

} // namespace segbench::dataio
