#pragma once

#include <functional>
#include <string>
#include <vector>

#include "segbench/nn/param_store.hpp"

namespace segbench::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool passed = false;
};

// Central finite differences vs analytic gradients, in the store's own
// precision (use ParamStore<double> for wide-precision checks). `f` must
// be deterministic: f(store, false) returns the scalar value, f(store,
// true) additionally accumulates analytic gradients into store grads.
// Relative error per element: |a - fd| / max(|a|, |fd|, rel_floor).
template <class T>
GradCheckReport grad_check(const std::function<double(ParamStore<T>&, bool)>& f,
                           ParamStore<T>& params, double eps, double tol,
                           double rel_floor = 1e-3) {
    const double v1 = f(params, false);
    const double v2 = f(params, false);
    if (v1 != v2)
        throw Error("grad_check: non-deterministic computation (two forward passes disagree)");

    params.zero_grads();
    f(params, true);

    std::vector<std::pair<std::string, std::vector<T>>> analytic;
    for (const auto& name : params.names())
        if (params.at(name).trainable) analytic.emplace_back(name, params.at(name).grad.v);

    GradCheckReport rep;
    for (const auto& [name, agrad] : analytic) {
        auto& p = params.at(name);
        GradCheckEntry entry{name, 0.0};
        for (size_t i = 0; i < p.value.size(); ++i) {
            const T saved = p.value.v[i];
            p.value.v[i] = saved + static_cast<T>(eps);
            const double fp = f(params, false);
            p.value.v[i] = saved - static_cast<T>(eps);
            const double fm = f(params, false);
            p.value.v[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(agrad[i]);
            const double rel =
                std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), rel_floor});
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
        }
        rep.max_rel_err = std::max(rep.max_rel_err, entry.max_rel_err);
        rep.entries.push_back(std::move(entry));
    }
    rep.passed = rep.max_rel_err <= tol;
    return rep;
}

} // namespace segbench::nn
