#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "segbench/nn/tensor.hpp"
#include "segbench/rng.hpp"

namespace segbench::nn {

enum class InitKind {
    UniformFanIn, // weights: U(-b, b), b = sqrt(6 / fan_in)
    Zero,         // biases, batch-norm shift, running means
    One,          // batch-norm scale, running variances
};

template <class T>
struct Param {
    Tensor4<T> value;
    Tensor4<T> grad;
    Tensor4<T> adam_m;
    Tensor4<T> adam_v;
    bool trainable = true; // running stats are stored but never optimized
    InitKind init = InitKind::Zero;
    int fan_in = 0;
};

// Named parameter tensors with gradients and optimizer moments. Iteration
// order is registration order, which makes init, optimization, checkpoints
// and counting deterministic.
template <class T>
class ParamStore {
public:
    Param<T>& add(const std::string& name, int n, int c, int h, int w, InitKind init,
                  int fan_in = 0, bool trainable = true) {
        if (map_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        Param<T> p;
        p.value = Tensor4<T>(n, c, h, w);
        p.grad = Tensor4<T>(n, c, h, w);
        p.adam_m = Tensor4<T>(n, c, h, w);
        p.adam_v = Tensor4<T>(n, c, h, w);
        p.trainable = trainable;
        p.init = init;
        p.fan_in = fan_in;
        order_.push_back(name);
        return map_.emplace(name, std::move(p)).first->second;
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t s) { step_count_ = s; }
    void bump_step() { ++step_count_; }

    void zero_grads() {
        for (const auto& n : order_) map_[n].grad.fill(T{0});
    }

    bool grads_finite() const {
        for (const auto& n : order_)
            if (!map_.at(n).grad.all_finite()) return false;
        return true;
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, Param<T>> map_;
    int64_t step_count_ = 0;
};

// Total element count over all value tensors.
template <class T>
size_t count_params(const ParamStore<T>& store) {
    size_t total = 0;
    for (const auto& n : store.names()) total += store.at(n).value.size();
    return total;
}

// Fan-in-scaled uniform for weights; biases/shifts 0, scales 1. Sequential
// draws in registration order make the result a pure function of the stream.
template <class T>
void init_random(ParamStore<T>& store, RngStream rng) {
    for (const auto& name : store.names()) {
        auto& p = store.at(name);
        switch (p.init) {
        case InitKind::UniformFanIn: {
            const double b = std::sqrt(6.0 / std::max(1, p.fan_in));
            for (auto& x : p.value.v) x = static_cast<T>(rng.uniform(-b, b));
            break;
        }
        case InitKind::Zero:
            p.value.fill(T{0});
            break;
        case InitKind::One:
            p.value.fill(T{1});
            break;
        }
        p.grad.fill(T{0});
        p.adam_m.fill(T{0});
        p.adam_v.fill(T{0});
    }
    store.set_step_count(0);
}

} // namespace segbench::nn
