#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "segbench/models.hpp"
#include "segbench/training.hpp"

namespace segbench::cli {

// Benchmark configuration file (JSON):
// {
//   "dataset": "path/manifest.json",            // or per-experiment map:
//   "datasets": {"lung-segmentation": "...", ...},
//   "experiments": ["lung-segmentation", ...],
//   "architectures": ["Unet", "Linknet", "FPN", "PSPNet"],
//   "encoders": [{"family": "plain", "width_scale": 0.125}, ...],
//   "inits": ["random", {"random": 42}, {"warmstart": "dir-or-file"}],
//   "seed": 17,
//   "train": {"epochs": 3, "batch_size": 2, ...}
// }
// Warmstart paths are resolved relative to the config file; a directory
// resolves to <dir>/<encoder-family>.ckpt per cell.
struct BenchmarkConfig {
    std::map<ExperimentKind, std::filesystem::path> dataset_paths;
    std::vector<models::ModelConfig> matrix; // enumeration order: ex, ar, en, ew
    std::vector<bool> seed_derived;          // per cell: seed came from the global seed
    training::TrainConfig train;
    uint64_t seed = 0;
    nlohmann::json raw; // parsed config, embedded into the run manifest

    static BenchmarkConfig load(const std::filesystem::path& path);

    // Re-derives the derived per-cell seeds after a seed override (env var).
    void apply_seed(uint64_t seed);
};

} // namespace segbench::cli
