#include "segbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace segbench::metrics {

MaskGrid binarize(const Image& pred, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("binarize: tau must be in (0,1)");
    MaskGrid out(pred.rows, pred.cols);
    for (size_t i = 0; i < pred.v.size(); ++i) out.v[i] = pred.v[i] >= tau ? 1 : 0;
    return out;
}

ConfusionCounts confusion(const MaskGrid& pred, const MaskGrid& target) {
    require_same_shape(pred.rows, pred.cols, target.rows, target.cols, "confusion");
    if (!is_binary(pred) || !is_binary(target))
        throw ValidationError("confusion: inputs must be binary");
    ConfusionCounts c;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] != 0, t = target.v[i] != 0;
        if (p && t)
            ++c.tp;
        else if (!p && !t)
            ++c.tn;
        else if (p && !t)
            ++c.fp;
        else
            ++c.fn;
    }
    return c;
}

std::string to_string(EmptyRule r) {
    return r == EmptyRule::PaperLiteral ? "paper_literal" : "strict";
}

EmptyRule empty_rule_from_string(const std::string& s) {
    if (s == "paper_literal") return EmptyRule::PaperLiteral;
    if (s == "strict") return EmptyRule::Strict;
    throw ConfigError("unknown empty rule '" + s + "'");
}

HardMetrics hard_metrics(const ConfusionCounts& c, double eps, EmptyRule rule) {
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0)
        throw ValidationError("hard_metrics: negative counts");
    if (c.tp + c.fp == 0) {
        const bool all_ones = rule == EmptyRule::PaperLiteral || c.fn == 0;
        if (all_ones) return {1.0, 1.0, 1.0};
    }
    HardMetrics m;
    m.sens = static_cast<double>(c.tp) / (static_cast<double>(c.tp + c.fn) + eps);
    m.spec = static_cast<double>(c.tn) / (static_cast<double>(c.tn + c.fp) + eps);
    m.dice = 2.0 * static_cast<double>(c.tp) /
             (2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn) + eps);
    return m;
}

namespace {

const std::string& group_key(const MetricsRecord& r, GroupBy g) {
    switch (g) {
    case GroupBy::Architecture: return r.architecture;
    case GroupBy::Encoder: return r.encoder;
    case GroupBy::Experiment: return r.experiment;
    case GroupBy::WeightInit: return r.weight_init;
    }
    throw ConfigError("bad GroupBy");
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) {
        sd = 0;
        return;
    }
    double acc = 0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

} // namespace

std::vector<GroupStat> aggregate(const std::vector<MetricsRecord>& records, GroupBy group_by) {
    std::map<std::string, std::vector<const MetricsRecord*>> groups;
    for (const auto& r : records)
        if (r.ok) groups[group_key(r, group_by)].push_back(&r);
    if (groups.empty()) throw ValidationError("aggregate: no ok records");
    std::vector<GroupStat> out;
    for (const auto& [key, rs] : groups) {
        GroupStat g;
        g.key = key;
        g.n = static_cast<int>(rs.size());
        g.single = rs.size() == 1;
        std::vector<double> sens, spec, dice;
        for (const auto* r : rs) {
            sens.push_back(r->sens);
            spec.push_back(r->spec);
            dice.push_back(r->dice);
        }
        mean_std(sens, g.mean_sens, g.std_sens);
        mean_std(spec, g.mean_spec, g.std_spec);
        mean_std(dice, g.mean_dice, g.std_dice);
        out.push_back(std::move(g));
    }
    return out;
}

const char* kMetricsCsvHeader =
    "experiment,architecture,encoder,weight_init,sens,spec,dice,params_millions,"
    "train_s_per_batch,val_s_per_batch,status";

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << kMetricsCsvHeader << "\n";
    char buf[256];
    for (const auto& r : records) {
        // percentages use Table-style 2 decimals; params and timings keep
        // enough precision for desk-scale models
        std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.6f,%.4f,%.4f", r.sens, r.spec, r.dice,
                      r.params_millions, r.train_s_per_batch, r.val_s_per_batch);
        out << r.experiment << ',' << r.architecture << ',' << r.encoder << ',' << r.weight_init
            << ',' << buf << ',' << r.status() << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader)
        throw FormatError(path.string() + ": unexpected metrics CSV header");
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 11)
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        MetricsRecord r;
        r.experiment = fields[0];
        r.architecture = fields[1];
        r.encoder = fields[2];
        r.weight_init = fields[3];
        r.sens = std::stod(fields[4]);
        r.spec = std::stod(fields[5]);
        r.dice = std::stod(fields[6]);
        r.params_millions = std::stod(fields[7]);
        r.train_s_per_batch = std::stod(fields[8]);
        r.val_s_per_batch = std::stod(fields[9]);
        r.ok = fields[10] == "ok";
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace segbench::metrics
