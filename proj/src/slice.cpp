#include "segbench/slice.hpp"

#include <set>

namespace segbench {

std::string to_string(ExperimentKind e) {
    switch (e) {
    case ExperimentKind::LungSegmentation: return "lung-segmentation";
    case ExperimentKind::LesionSegmentationA: return "lesion-segmentation-a";
    case ExperimentKind::LesionSegmentationB: return "lesion-segmentation-b";
    }
    throw ConfigError("bad ExperimentKind");
}

ExperimentKind experiment_from_string(const std::string& s) {
    if (s == "lung-segmentation") return ExperimentKind::LungSegmentation;
    if (s == "lesion-segmentation-a") return ExperimentKind::LesionSegmentationA;
    if (s == "lesion-segmentation-b") return ExperimentKind::LesionSegmentationB;
    throw ConfigError("unknown experiment '" + s + "'");
}

void Slice::validate(const std::string& name) const {
    if (image.rows < 8 || image.cols < 8)
        throw ValidationError(name + ": slice must be at least 8x8, got " +
                              std::to_string(image.rows) + "x" + std::to_string(image.cols));
    if (!target_mask.same_shape(image.rows, image.cols))
        throw ValidationError(name + ": target_mask shape differs from image");
    if (!is_binary(target_mask))
        throw ValidationError(name + ": target_mask contains non-binary values");
    if (lung_mask) {
        if (!lung_mask->same_shape(image.rows, image.cols))
            throw ValidationError(name + ": lung_mask shape differs from image");
        if (!is_binary(*lung_mask))
            throw ValidationError(name + ": lung_mask contains non-binary values");
    }
    if (slice_index < 0) throw ValidationError(name + ": negative slice_index");
}

void Dataset::validate() const {
    auto key = [](const Slice& s) { return s.volume_id + "#" + std::to_string(s.slice_index); };
    std::set<std::string> train_keys, val_keys;
    for (const auto& s : train) train_keys.insert(key(s));
    for (const auto& s : val) {
        if (train_keys.count(key(s)))
            throw ValidationError("dataset '" + name + "': slice " + key(s) +
                                  " appears in both train and val");
        val_keys.insert(key(s));
    }
    for (const auto& s : test)
        if (train_keys.count(key(s)) || val_keys.count(key(s)))
            throw ValidationError("dataset '" + name + "': test slice " + key(s) +
                                  " overlaps another split");
    auto check_shapes = [this](const std::vector<Slice>& split, const char* split_name) {
        for (const auto& s : split)
            if (s.rows() != split.front().rows() || s.cols() != split.front().cols())
                throw ValidationError("dataset '" + name + "': non-uniform shapes in split " +
                                      split_name);
    };
    check_shapes(train, "train");
    check_shapes(val, "val");
    check_shapes(test, "test");
}

} // namespace segbench
