#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segbench/slice.hpp"

namespace segbench::segb {

// SEGB slice file, bit-exact layout:
//   magic "SEGB" | version u8 = 1 | dtype u8 (0 = f32 image, 1 = u8 mask)
//   rows u32 LE | cols u32 LE | row-major payload (f32 LE or u8)
// SEGB-3D volume file: same header plus depth u32 LE before the payload.

constexpr uint8_t kDtypeImage = 0;
constexpr uint8_t kDtypeMask = 1;

void write_image(const std::filesystem::path& path, const Image& img);
void write_mask(const std::filesystem::path& path, const MaskGrid& mask);

Image read_image(const std::filesystem::path& path);
// Rejects payload values outside {0,1}, naming the offending file.
MaskGrid read_mask(const std::filesystem::path& path);

// 3D binary voxel grid, depth-major stack of z-slabs.
struct VoxelGrid {
    int depth = 0;
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> v;

    uint8_t& at(int z, int r, int c) {
        return v[(static_cast<size_t>(z) * rows + r) * cols + c];
    }
    const uint8_t& at(int z, int r, int c) const {
        return v[(static_cast<size_t>(z) * rows + r) * cols + c];
    }
    bool operator==(const VoxelGrid&) const = default;
};

void write_volume(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_volume(const std::filesystem::path& path);

// Dataset manifest (JSON): {name, normalization:{mu,sigma},
// splits:{train|val|test:[{image, target_mask, lung_mask?, volume_id,
// slice_index}]}}. Slice paths are relative to the manifest directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes one SEGB file per grid plus manifest.json under `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Content digest over the manifest and every referenced slice file.
uint64_t dataset_digest(const std::filesystem::path& manifest_path);

uint64_t file_digest(const std::filesystem::path& path);

} // namespace segbench::segb
