#pragma once

#include <cstdint>
#include <vector>

namespace segbench {

// Splittable counter-based random stream. A stream is identified by a key
// derived from (seed, split lineage); draws advance a counter and never
// affect the keys of children, so the same lineage always reproduces the
// same sequence regardless of how many values the parent produced.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc908ull)), counter_(0) {}

    // Child stream i. Depends only on (seed, path), not on draw position.
    RngStream split(uint64_t i) const {
        RngStream child(*this);
        child.key_ = mix(key_ ^ mix(i + 0x9e3779b97f4a7c15ull));
        child.counter_ = 0;
        return child;
    }

    uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

    bool bernoulli(double p) { return next_double() < p; }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // modulo bias is < 2^-53 for the n used here (shuffles, pixel picks)
        return static_cast<uint64_t>(next_double() * static_cast<double>(n));
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t key_;
    uint64_t counter_;
};

} // namespace segbench
