#pragma once

#include <cstdint>
#include <vector>

#include "segbench/common.hpp"

namespace segbench {

// Dense row-major 2D grid.
template <class T>
struct Grid2D {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Grid2D() = default;
    Grid2D(int r, int c, T fill = T{}) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }
    bool same_shape(int r, int c) const { return rows == r && cols == c; }

    bool operator==(const Grid2D&) const = default;
};

using Image = Grid2D<float>;
using MaskGrid = Grid2D<uint8_t>;
using LabelGrid = Grid2D<int32_t>;

inline void require_same_shape(const int r1, const int c1, const int r2, const int c2,
                               const char* what) {
    if (r1 != r2 || c1 != c2)
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(r1) + "x" +
                         std::to_string(c1) + " vs " + std::to_string(r2) + "x" +
                         std::to_string(c2));
}

inline bool is_binary(const MaskGrid& m) {
    for (uint8_t x : m.v)
        if (x > 1) return false;
    return true;
}

} // namespace segbench
