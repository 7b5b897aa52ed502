#pragma once

#include <utility>

#include "segbench/grid.hpp"
#include "segbench/rng.hpp"

namespace segbench::augment {

struct AugmentParams {
    bool hflip = false;
    bool vflip = false;
    double angle_deg = 0.0; // in [-180, 180]
    double scale = 1.0;     // in [0.5, 1.5]
};

// hflip, vflip ~ Bernoulli(0.5); angle ~ U[-180, 180]; scale ~ U[0.5, 1.5].
// Draw order is fixed, so the same stream lineage reproduces the same
// parameters.
AugmentParams sample_params(RngStream& rng);

// Applies one combined affine map (flips, then rotation about the image
// center, then scale about the center) in a single resampling pass. Image
// sampled bilinearly, mask nearest; out-of-frame regions are zero.
std::pair<Image, MaskGrid> apply(const Image& image, const MaskGrid& mask,
                                 const AugmentParams& p);

} // namespace segbench::augment
