#pragma once

#include <utility>

#include "segbench/slice.hpp"

namespace segbench::dataio {

enum class ResizeMode { Bilinear, Nearest };

// image' = (image - mu) / sigma, elementwise; masks and metadata untouched.
Slice normalize(const Slice& s, double mu, double sigma);

// Normalizes every slice in every split with ds.normalization.
Dataset normalize_dataset(const Dataset& ds);

// Collapses labels {1..K} to 1; 0 stays 0.
MaskGrid merge_positive_classes(const LabelGrid& labels);

Image resize(const Image& img, int rows, int cols, ResizeMode mode);
// Nearest-neighbour only: preserves the value set.
MaskGrid resize_mask(const MaskGrid& mask, int rows, int cols);

// image <- image * lung_mask. Requires lung_mask; target untouched.
Slice apply_lung_gate(const Slice& s);

// Experiment-specific (input image, target mask). Returned grids are
// copies; mutating them never changes the stored slice.
std::pair<Image, MaskGrid> select_target(const Slice& s, ExperimentKind experiment);

} // namespace segbench::dataio
