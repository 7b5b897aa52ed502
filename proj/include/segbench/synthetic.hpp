#pragma once

#include "segbench/slice.hpp"

namespace segbench::dataio {

// Desk-scale stand-in for the CT datasets: elliptic "lungs" over soft
// tissue, with lesion blobs placed strictly inside the lung region and an
// intensity offset, in raw Hounsfield-like units. Deterministic per seed.
struct SyntheticSpec {
    int n_slices = 12;
    int shape = 64;     // square slices
    uint64_t seed = 0;
    bool balanced = false; // true: lesion blobs scale up towards lung size
};

// Splits: test = ~20% of n_slices, remainder 80/20 train/val (>= 1 each,
// requires n_slices >= 3). Slices are grouped into volumes of up to 4 with
// contiguous slice indices.
Dataset generate_synthetic(const SyntheticSpec& spec);

} // namespace segbench::dataio
