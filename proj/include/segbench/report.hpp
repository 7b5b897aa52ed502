#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "segbench/metrics.hpp"
#include "segbench/nn/param_store.hpp"
#include "segbench/segb.hpp"
#include "segbench/slice.hpp"

namespace segbench::report {

struct Histogram {
    std::vector<double> bin_edges;   // ascending, |edges| = |frequencies| + 1
    std::vector<double> frequencies; // normalized, sums to 1
    std::string source;              // "images" or "masks"
};

// Pooled over all grids, linear frequencies (log scaling is a plot concern).
Histogram compute_histogram(const std::vector<Image>& images, int n_bins);
Histogram compute_histogram(const std::vector<MaskGrid>& masks, int n_bins);

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path);

struct Scatter {
    std::vector<std::pair<double, double>> points; // (params_millions, dice)
    double pearson_r = 0;
    int n = 0;
};

// Pearson correlation of Dice vs parameter count over ok records. No
// significance claim; callers report r and n only.
Scatter dice_vs_params(const std::vector<metrics::MetricsRecord>& records);

void write_scatter_csv(const Scatter& s, const std::filesystem::path& path);

// Two-column key,value CSV mirroring the benchmark's result database:
// per experiment/init mean|std|max keys, per experiment/architecture/init
// mean|std, argmax index keys, global init stats, best/worst encoder, and
// run constants. Values derive from metrics::aggregate, 2-decimal fixed.
void emit_keys_values(const std::vector<metrics::MetricsRecord>& records, int num_slices_test,
                      int num_epochs, int batch_size, const std::filesystem::path& path);

// Grid of per-filter tiles from a 4D weight tensor (input channel 0),
// clipped to [lo, hi] and mapped to 8-bit grayscale PGM (P5).
void dump_weight_grid(const nn::ParamStore<float>& store, const std::string& layer_name,
                      double lo, double hi, const std::filesystem::path& path);

// Stacks (slice_index, mask) pairs into a 3D voxel grid; indices must be
// contiguous from their minimum and shapes uniform.
segb::VoxelGrid stack_volume(std::vector<std::pair<int, MaskGrid>> masks);

} // namespace segbench::report
