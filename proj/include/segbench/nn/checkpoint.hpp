#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "segbench/nn/param_store.hpp"

namespace segbench::nn {

// Checkpoint container:
//   magic "SBCK" | u32 LE header length | JSON header | f32 LE blob
// Header: {config_hash, model_config, epoch, val_loss,
//          params: [{name, shape:[n,c,h,w], offset, length}]} with offsets
// relative to the blob start, entries in store order.

struct CheckpointMeta {
    std::string config_hash;
    nlohmann::json model_config; // full config, so a checkpoint is self-describing
    int epoch = 0;
    double val_loss = 0.0;
};

struct WarmstartReport {
    std::vector<std::string> loaded;
    std::vector<std::string> skipped;  // store entries with no usable match
    std::vector<std::string> unused;   // checkpoint entries not present in the store
};

void save_checkpoint_f32(const std::filesystem::path& path, const CheckpointMeta& meta,
                         const std::vector<std::pair<std::string, const Tensor4<float>*>>& entries);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::string> names; // header order
    std::vector<std::array<int, 4>> shapes;
    std::vector<std::vector<float>> values;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

template <class T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path,
                     const CheckpointMeta& meta, const std::string& name_prefix = "") {
    std::vector<std::pair<std::string, const Tensor4<float>*>> entries;
    std::vector<Tensor4<float>> converted; // storage when T != float
    converted.reserve(store.size());
    std::vector<std::string> selected;
    for (const auto& n : store.names())
        if (name_prefix.empty() || n.rfind(name_prefix, 0) == 0) selected.push_back(n);
    for (const auto& n : selected) {
        if constexpr (std::is_same_v<T, float>) {
            entries.emplace_back(n, &store.at(n).value);
        } else {
            converted.push_back(store.at(n).value.template cast<float>());
        }
    }
    if constexpr (!std::is_same_v<T, float>) {
        for (size_t i = 0; i < selected.size(); ++i)
            entries.emplace_back(selected[i], &converted[i]);
    }
    save_checkpoint_f32(path, meta, entries);
}

// Copies checkpoint values into matching (name, shape) store entries.
// strict: any skipped, missing or mismatched entry raises FormatError.
template <class T>
WarmstartReport load_warmstart(ParamStore<T>& store, const std::filesystem::path& path,
                               bool strict) {
    LoadedCheckpoint ck = read_checkpoint(path);
    WarmstartReport rep;
    std::vector<bool> used(ck.names.size(), false);
    for (const auto& name : store.names()) {
        auto& p = store.at(name);
        bool matched = false;
        for (size_t i = 0; i < ck.names.size(); ++i) {
            if (ck.names[i] != name) continue;
            const auto& s = ck.shapes[i];
            if (s[0] != p.value.n || s[1] != p.value.c || s[2] != p.value.h || s[3] != p.value.w) {
                if (strict)
                    throw FormatError("checkpoint " + path.string() + ": shape mismatch for '" +
                                      name + "'");
                break;
            }
            for (size_t k = 0; k < ck.values[i].size(); ++k)
                p.value.v[k] = static_cast<T>(ck.values[i][k]);
            used[i] = true;
            matched = true;
            break;
        }
        if (matched)
            rep.loaded.push_back(name);
        else
            rep.skipped.push_back(name);
    }
    for (size_t i = 0; i < ck.names.size(); ++i)
        if (!used[i]) rep.unused.push_back(ck.names[i]);
    if (strict && (!rep.skipped.empty() || !rep.unused.empty())) {
        const std::string& offender = rep.skipped.empty() ? rep.unused.front() : rep.skipped.front();
        throw FormatError("checkpoint " + path.string() + ": strict load failed at parameter '" +
                          offender + "'");
    }
    return rep;
}

} // namespace segbench::nn
