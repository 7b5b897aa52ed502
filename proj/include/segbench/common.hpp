#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace segbench {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

// A container did not match its expected binary/JSON layout (bad magic,
// version, truncated payload).
class FormatError : public Error {
public:
    using Error::Error;
};

// Input data violates a documented invariant (non-binary mask, shape
// mismatch between paired grids, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Tensor/grid shapes incompatible with the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration or command-line usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

// One benchmark cell failed (training diverged, checkpoint unreadable).
// Other cells are unaffected.
class CellError : public Error {
public:
    using Error::Error;
};

// FNV-1a, used for content digests and config hashes.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::string to_hex(uint64_t v);

} // namespace segbench
