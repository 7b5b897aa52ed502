#include "segbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace segbench::report {

namespace {

Histogram histogram_of(const std::vector<double>& values, int n_bins, const char* source) {
    if (values.empty()) throw ValidationError("compute_histogram: no input values");
    if (n_bins < 1) throw ConfigError("compute_histogram: n_bins must be >= 1");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) { // degenerate range: widen so every value lands in one bin
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.source = source;
    h.bin_edges.resize(static_cast<size_t>(n_bins) + 1);
    for (int i = 0; i <= n_bins; ++i)
        h.bin_edges[i] = lo + (hi - lo) * static_cast<double>(i) / n_bins;
    h.frequencies.assign(static_cast<size_t>(n_bins), 0.0);
    const double inv = 1.0 / static_cast<double>(values.size());
    for (double v : values) {
        int idx = static_cast<int>((v - lo) / (hi - lo) * n_bins);
        idx = std::clamp(idx, 0, n_bins - 1); // right edge of the last bin is inclusive
        h.frequencies[idx] += inv;
    }
    return h;
}

} // namespace

Histogram compute_histogram(const std::vector<Image>& images, int n_bins) {
    std::vector<double> vals;
    for (const auto& im : images)
        for (float v : im.v) vals.push_back(v);
    return histogram_of(vals, n_bins, "images");
}

Histogram compute_histogram(const std::vector<MaskGrid>& masks, int n_bins) {
    std::vector<double> vals;
    for (const auto& m : masks)
        for (uint8_t v : m.v) vals.push_back(v);
    return histogram_of(vals, n_bins, "masks");
}

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "bin_lo,bin_hi,frequency\n";
    char buf[128];
    for (size_t i = 0; i < h.frequencies.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", h.bin_edges[i], h.bin_edges[i + 1],
                      h.frequencies[i]);
        out << buf << "\n";
    }
}

Scatter dice_vs_params(const std::vector<metrics::MetricsRecord>& records) {
    Scatter s;
    for (const auto& r : records)
        if (r.ok) s.points.emplace_back(r.params_millions, r.dice);
    s.n = static_cast<int>(s.points.size());
    if (s.n < 3) throw ValidationError("dice_vs_params: need at least 3 ok records");
    double mx = 0, my = 0;
    for (const auto& [x, y] : s.points) {
        mx += x;
        my += y;
    }
    mx /= s.n;
    my /= s.n;
    double sxy = 0, sxx = 0, syy = 0;
    for (const auto& [x, y] : s.points) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0 || syy == 0)
        throw ValidationError("dice_vs_params: zero variance, correlation undefined");
    s.pearson_r = sxy / std::sqrt(sxx * syy);
    return s;
}

void write_scatter_csv(const Scatter& s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "params_millions,dice\n";
    char buf[96];
    for (const auto& [x, y] : s.points) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", x, y);
        out << buf << "\n";
    }
}

namespace {

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

void emit_keys_values(const std::vector<metrics::MetricsRecord>& records, int num_slices_test,
                      int num_epochs, int batch_size, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("num_slices_test", std::to_string(num_slices_test));
    kv.emplace_back("num_epochs", std::to_string(num_epochs));
    kv.emplace_back("batch_size", std::to_string(batch_size));

    std::set<std::string> experiments, inits, architectures;
    for (const auto& r : records) {
        if (!r.ok) continue;
        experiments.insert(r.experiment);
        inits.insert(r.weight_init);
        architectures.insert(r.architecture);
    }

    auto subset = [&](auto pred) {
        std::vector<metrics::MetricsRecord> out;
        for (const auto& r : records)
            if (r.ok && pred(r)) out.push_back(r);
        return out;
    };

    auto mean_std_of = [](const std::vector<metrics::MetricsRecord>& rs, double& mean,
                          double& sd) {
        mean = 0;
        for (const auto& r : rs) mean += r.dice;
        mean /= static_cast<double>(rs.size());
        sd = 0;
        if (rs.size() >= 2) {
            for (const auto& r : rs) sd += (r.dice - mean) * (r.dice - mean);
            sd = std::sqrt(sd / static_cast<double>(rs.size() - 1));
        }
    };

    // stats come from the same records metrics::aggregate sees, so both
    // report identical means
    for (const auto& ex : experiments)
        for (const auto& init : inits) {
            auto rs = subset([&](const metrics::MetricsRecord& r) {
                return r.experiment == ex && r.weight_init == init;
            });
            if (rs.empty()) continue;
            double mean, sd;
            mean_std_of(rs, mean, sd);
            const metrics::MetricsRecord* best = &rs.front();
            for (const auto& r : rs)
                if (r.dice > best->dice) best = &r;
            kv.emplace_back(ex + "-" + init + "-mean", fmt2(mean));
            kv.emplace_back(ex + "-" + init + "-std", fmt2(sd));
            kv.emplace_back(ex + "-" + init + "-max", fmt2(best->dice));
            kv.emplace_back(ex + "-architecture-" + init + "-index-max", best->architecture);
            kv.emplace_back(ex + "-encoder-" + init + "-index-max", best->encoder);
        }

    for (const auto& ex : experiments)
        for (const auto& ar : architectures)
            for (const auto& init : inits) {
                auto rs = subset([&](const metrics::MetricsRecord& r) {
                    return r.experiment == ex && r.architecture == ar && r.weight_init == init;
                });
                if (rs.empty()) continue;
                double mean, sd;
                mean_std_of(rs, mean, sd);
                kv.emplace_back(ex + "-" + ar + "-" + init + "-mean", fmt2(mean));
                kv.emplace_back(ex + "-" + ar + "-" + init + "-std", fmt2(sd));
            }

    for (const auto& init : inits) {
        auto rs = subset(
            [&](const metrics::MetricsRecord& r) { return r.weight_init == init; });
        if (rs.empty()) continue;
        double mean, sd;
        mean_std_of(rs, mean, sd);
        kv.emplace_back(init + "-mean", fmt2(mean));
        kv.emplace_back(init + "-std", fmt2(sd));
    }

    // encoder ranking by mean dice over all ok records
    std::map<std::string, std::vector<double>> by_enc;
    for (const auto& r : records)
        if (r.ok) by_enc[r.encoder].push_back(r.dice);
    if (!by_enc.empty()) {
        std::string best_enc, worst_enc;
        double best_v = -1, worst_v = 1e300;
        for (const auto& [enc, dices] : by_enc) {
            double m = 0;
            for (double d : dices) m += d;
            m /= static_cast<double>(dices.size());
            if (m > best_v) {
                best_v = m;
                best_enc = enc;
            }
            if (m < worst_v) {
                worst_v = m;
                worst_enc = enc;
            }
        }
        kv.emplace_back("encoder-best", best_enc);
        kv.emplace_back("encoder-worst", worst_enc);
    }

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [k, v] : kv) out << k << "," << v << "\n";
}

void dump_weight_grid(const nn::ParamStore<float>& store, const std::string& layer_name,
                      double lo, double hi, const std::filesystem::path& path) {
    if (!store.has(layer_name))
        throw ConfigError("dump_weight_grid: no layer '" + layer_name + "'");
    const auto& t = store.at(layer_name).value;
    if (t.h < 1 || t.w < 1 || t.n < 1)
        throw ConfigError("dump_weight_grid: layer '" + layer_name + "' is not a 4D weight");
    if (!(hi > lo)) throw ConfigError("dump_weight_grid: clip range must satisfy lo < hi");

    const int tiles = t.n;
    const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(tiles))));
    const int width = grid * t.w;
    const int height = grid * t.h;
    std::vector<uint8_t> pixels(static_cast<size_t>(width) * height);

    auto shade = [&](double v) {
        const double c = std::clamp(v, lo, hi);
        return static_cast<uint8_t>(std::lround((c - lo) / (hi - lo) * 255.0));
    };
    const uint8_t pad = shade(0.0);
    std::fill(pixels.begin(), pixels.end(), pad);

    for (int f = 0; f < tiles; ++f) {
        const int gy = f / grid, gx = f % grid;
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x)
                pixels[static_cast<size_t>(gy * t.h + y) * width + gx * t.w + x] =
                    shade(t.at(f, 0, y, x));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<long>(pixels.size()));
}

segb::VoxelGrid stack_volume(std::vector<std::pair<int, MaskGrid>> masks) {
    if (masks.empty()) throw ValidationError("stack_volume: empty mask list");
    std::sort(masks.begin(), masks.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const int rows = masks.front().second.rows;
    const int cols = masks.front().second.cols;
    for (size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].second.rows != rows || masks[i].second.cols != cols)
            throw ShapeError("stack_volume: mask shapes differ");
        if (masks[i].first != masks.front().first + static_cast<int>(i))
            throw ValidationError("stack_volume: slice index gap at index " +
                                  std::to_string(masks[i].first));
    }
    segb::VoxelGrid g;
    g.depth = static_cast<int>(masks.size());
    g.rows = rows;
    g.cols = cols;
    g.v.resize(static_cast<size_t>(g.depth) * rows * cols);
    for (int z = 0; z < g.depth; ++z)
        std::copy(masks[z].second.v.begin(), masks[z].second.v.end(),
                  g.v.begin() + static_cast<long>(static_cast<size_t>(z) * rows * cols));
    return g;
}

} // namespace segbench::report
