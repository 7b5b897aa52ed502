#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segbench/grid.hpp"

namespace segbench::metrics {

// 1 where pred >= tau.
MaskGrid binarize(const Image& pred, double tau);

struct ConfusionCounts {
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    int64_t total() const { return tp + tn + fp + fn; }
};

ConfusionCounts confusion(const MaskGrid& pred, const MaskGrid& target);

// When the prediction is empty: PaperLiteral sets all metrics to 1 whenever
// TP+FP = 0; Strict does so only when the target is empty too (FN = 0).
enum class EmptyRule { PaperLiteral, Strict };

std::string to_string(EmptyRule r);
EmptyRule empty_rule_from_string(const std::string& s);

struct HardMetrics {
    double sens = 0, spec = 0, dice = 0; // fractions in [0,1]
};

HardMetrics hard_metrics(const ConfusionCounts& c, double eps, EmptyRule rule);

// One row of a benchmark table; percentages in [0,100].
struct MetricsRecord {
    std::string experiment;
    std::string architecture;
    std::string encoder;
    std::string weight_init;
    double sens = 0, spec = 0, dice = 0;
    double params_millions = 0;
    double train_s_per_batch = 0;
    double val_s_per_batch = 0;
    bool ok = false;

    std::string status() const { return ok ? "ok" : "failed"; }
};

enum class GroupBy { Architecture, Encoder, Experiment, WeightInit };

struct GroupStat {
    std::string key;
    int n = 0;
    double mean_sens = 0, std_sens = 0;
    double mean_spec = 0, std_spec = 0;
    double mean_dice = 0, std_dice = 0;
    bool single = false; // one record: std reported as 0, flagged
};

// Sample (n-1) standard deviation over ok records. Keys sorted.
std::vector<GroupStat> aggregate(const std::vector<MetricsRecord>& records, GroupBy group_by);

extern const char* kMetricsCsvHeader;

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

} // namespace segbench::metrics
