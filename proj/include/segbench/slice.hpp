#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segbench/grid.hpp"

namespace segbench {

// The three experimental setups. B multiplies the input image by the lung
// mask before segmentation, restricting the search to lung tissue.
enum class ExperimentKind {
    LungSegmentation,
    LesionSegmentationA,
    LesionSegmentationB,
};

std::string to_string(ExperimentKind e);
ExperimentKind experiment_from_string(const std::string& s);

// One 2D image with its target mask; the atom of every dataset.
// Image values are raw Hounsfield units until normalize() is applied.
struct Slice {
    Image image;
    MaskGrid target_mask;
    std::optional<MaskGrid> lung_mask;
    std::string volume_id;
    int slice_index = 0;

    int rows() const { return image.rows; }
    int cols() const { return image.cols; }

    // Throws ValidationError on any invariant breach. `name` tags messages.
    void validate(const std::string& name) const;
};

struct Normalization {
    double mu = -500.0;
    double sigma = 500.0;
};

struct Dataset {
    std::vector<Slice> train;
    std::vector<Slice> val;
    std::vector<Slice> test;
    Normalization normalization;
    std::string name;

    // Split disjointness by (volume_id, slice_index) and per-split shape
    // uniformity. Throws ValidationError.
    void validate() const;
};

} // namespace segbench
