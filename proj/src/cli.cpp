#include "segbench/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "segbench/config.hpp"
#include "segbench/dataio.hpp"
#include "segbench/metrics.hpp"
#include "segbench/models.hpp"
#include "segbench/report.hpp"
#include "segbench/segb.hpp"
#include "segbench/synthetic.hpp"
#include "segbench/training.hpp"

namespace segbench::cli {

namespace {

constexpr const char* kToolVersion = "0.1.0";

void emit_event(std::ostream& err, const std::string& event, const nlohmann::json& fields = {}) {
    nlohmann::json j = fields;
    j["event"] = event;
    err << j.dump() << "\n";
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int cmd_generate_synthetic(int n, int shape, uint64_t seed, bool balanced,
                           const std::string& out_dir, std::ostream& out, std::ostream& err) {
    dataio::SyntheticSpec spec;
    spec.n_slices = n;
    spec.shape = shape;
    spec.seed = seed;
    spec.balanced = balanced;
    const Dataset ds = dataio::generate_synthetic(spec);
    segb::write_dataset(ds, out_dir);
    emit_event(err, "dataset_written",
               {{"dir", out_dir},
                {"train", ds.train.size()},
                {"val", ds.val.size()},
                {"test", ds.test.size()}});
    out << out_dir << "/manifest.json\n";
    return kExitOk;
}

int cmd_make_warmstart(const std::string& family, double width_scale, int depth, uint64_t seed,
                       const std::string& out_path, std::ostream& out, std::ostream& err) {
    models::ModelConfig mc;
    mc.architecture = models::Architecture::Unet; // any host; only encoder params are kept
    mc.encoder.family = models::encoder_family_from_string(family);
    mc.encoder.depth = depth;
    mc.encoder.width_scale = width_scale;
    mc.weight_init.kind = models::WeightInit::Kind::Random;
    mc.weight_init.seed = seed;
    models::Model<float> model(mc);
    nn::init_random(model.store(), RngStream(seed));
    nn::CheckpointMeta meta;
    meta.config_hash = mc.config_hash();
    meta.model_config = mc.to_json();
    meta.epoch = 0;
    meta.val_loss = 0.0;
    nn::save_checkpoint(model.store(), out_path, meta, "encoder.");
    emit_event(err, "warmstart_written", {{"path", out_path}, {"family", family}});
    out << out_path << "\n";
    return kExitOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_dir, int jobs,
                  bool strict_repro, std::ostream& out, std::ostream& err) {
    BenchmarkConfig cfg = BenchmarkConfig::load(config_path);
    cfg.train.strict_repro = strict_repro;

    if (const char* env = std::getenv("SEGBENCH_SEED")) {
        const uint64_t s = std::strtoull(env, nullptr, 10);
        emit_event(err, "seed_override", {{"from", cfg.seed}, {"to", s}});
        cfg.apply_seed(s);
    }

    const std::filesystem::path outp(out_dir);
    std::filesystem::create_directories(outp);

    std::map<ExperimentKind, Dataset> loaded;
    std::map<ExperimentKind, const Dataset*> datasets;
    nlohmann::json dataset_digests;
    for (const auto& [ex, path] : cfg.dataset_paths) {
        if (!loaded.count(ex)) {
            loaded.emplace(ex, segb::load_dataset(path));
            dataset_digests[to_string(ex)] = to_hex(segb::dataset_digest(path));
        }
    }
    for (auto& [ex, ds] : loaded) datasets[ex] = &ds;

    const std::string started = now_iso8601();
    auto log = [&err](const std::string& s) { emit_event(err, "cell", {{"msg", s}}); };
    const auto records =
        training::run_benchmark(cfg.matrix, datasets, cfg.train, jobs, outp / "runs", log);

    metrics::write_metrics_csv(outp / "metrics.csv", records);
    const int n_test = static_cast<int>(loaded.begin()->second.test.size());
    report::emit_keys_values(records, n_test, cfg.train.epochs, cfg.train.batch_size,
                             outp / "keys-values.csv");

    nlohmann::json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["config_digest"] = to_hex(segb::file_digest(config_path));
    manifest["config"] = cfg.raw;
    manifest["seed"] = cfg.seed;
    manifest["strict_repro"] = strict_repro;
    manifest["jobs"] = jobs;
    manifest["dataset_digests"] = dataset_digests;
    nlohmann::json dpaths;
    for (const auto& [ex, p] : cfg.dataset_paths) dpaths[to_string(ex)] = p.string();
    manifest["dataset_paths"] = dpaths;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& mc : cfg.matrix) cells.push_back(mc.cell_id());
    manifest["matrix"] = cells;
    manifest["started"] = started;
    manifest["finished"] = now_iso8601();
    std::ofstream mf(outp / "run_manifest.json");
    mf << manifest.dump(2) << "\n";

    size_t failures = 0;
    for (const auto& r : records)
        if (!r.ok) ++failures;
    emit_event(err, "benchmark_done",
               {{"cells", records.size()}, {"failed", failures}, {"out", out_dir}});
    out << (outp / "metrics.csv").string() << "\n";
    return failures == 0 ? kExitOk : kExitCellFailures;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset_path,
                 const std::string& experiment, const std::string& split, std::ostream& out,
                 std::ostream& err) {
    const nn::LoadedCheckpoint ck = nn::read_checkpoint(checkpoint);
    models::ModelConfig mc = models::ModelConfig::from_json(ck.meta.model_config);
    mc.experiment = experiment_from_string(experiment);

    Dataset ds = segb::load_dataset(dataset_path);
    ds = dataio::normalize_dataset(ds);
    const std::vector<Slice>* slices = &ds.test;
    if (split == "train")
        slices = &ds.train;
    else if (split == "val")
        slices = &ds.val;
    else if (split != "test")
        throw ConfigError("unknown split '" + split + "'");

    std::vector<std::pair<Image, MaskGrid>> pairs;
    for (const auto& s : *slices) pairs.push_back(dataio::select_target(s, mc.experiment));

    models::Model<float> model(mc);
    nn::load_warmstart(model.store(), checkpoint, true);

    training::TrainConfig tc;
    const metrics::HardMetrics m = training::evaluate_model(model, pairs, tc);

    metrics::MetricsRecord rec;
    rec.experiment = to_string(mc.experiment);
    rec.architecture = models::to_string(mc.architecture);
    rec.encoder = models::to_string(mc.encoder.family);
    rec.weight_init =
        mc.weight_init.kind == models::WeightInit::Kind::Random ? "random" : "warmstart";
    rec.sens = 100.0 * m.sens;
    rec.spec = 100.0 * m.spec;
    rec.dice = 100.0 * m.dice;
    rec.params_millions = static_cast<double>(nn::count_params(model.store())) / 1e6;
    rec.ok = true;

    emit_event(err, "evaluated", {{"checkpoint", checkpoint}, {"slices", pairs.size()}});
    out << metrics::kMetricsCsvHeader << "\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.6f,%.4f,%.4f", rec.sens, rec.spec, rec.dice,
                  rec.params_millions, 0.0, 0.0);
    out << rec.experiment << ',' << rec.architecture << ',' << rec.encoder << ','
        << rec.weight_init << ',' << buf << ",ok\n";
    return kExitOk;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir, bool histograms,
               bool scatter, const std::string& weights_layer, const std::string& cell,
               bool volumes, int bins, std::ostream& out, std::ostream& err) {
    const std::filesystem::path run(run_dir);
    if (!std::filesystem::exists(run / "run_manifest.json"))
        throw IoError("no run manifest under " + run_dir);
    nlohmann::json manifest;
    {
        std::ifstream in(run / "run_manifest.json");
        in >> manifest;
    }
    const auto records = metrics::read_metrics_csv(run / "metrics.csv");
    const std::filesystem::path outp =
        out_dir.empty() ? run / "report" : std::filesystem::path(out_dir);
    std::filesystem::create_directories(outp);

    auto pick_cell = [&]() -> std::string {
        if (!cell.empty()) return cell;
        for (const auto& c : manifest.at("matrix")) return c.get<std::string>();
        throw ConfigError("run has no cells");
    };

    if (histograms) {
        for (const auto& [ex_name, path] : manifest.at("dataset_paths").items()) {
            const ExperimentKind ex = experiment_from_string(ex_name);
            Dataset ds = dataio::normalize_dataset(segb::load_dataset(path.get<std::string>()));
            std::vector<Image> images;
            std::vector<MaskGrid> masks;
            for (const auto& s : ds.test) {
                auto [img, tgt] = dataio::select_target(s, ex);
                images.push_back(std::move(img));
                masks.push_back(std::move(tgt));
            }
            report::write_histogram_csv(report::compute_histogram(images, bins),
                                        outp / ("histogram-" + ex_name + "-images.csv"));
            report::write_histogram_csv(report::compute_histogram(masks, bins),
                                        outp / ("histogram-" + ex_name + "-masks.csv"));
        }
        emit_event(err, "histograms_written", {{"dir", outp.string()}});
    }

    if (scatter) {
        std::set<std::string> experiments;
        for (const auto& r : records)
            if (r.ok) experiments.insert(r.experiment);
        std::ofstream corr(outp / "correlations.csv");
        corr << "experiment,pearson_r,n\n";
        for (const auto& ex : experiments) {
            std::vector<metrics::MetricsRecord> sub;
            for (const auto& r : records)
                if (r.ok && r.experiment == ex) sub.push_back(r);
            const report::Scatter s = report::dice_vs_params(sub);
            report::write_scatter_csv(s, outp / ("scatter-" + ex + ".csv"));
            char buf[96];
            std::snprintf(buf, sizeof buf, "%.6f", s.pearson_r);
            corr << ex << ',' << buf << ',' << s.n << "\n";
        }
        emit_event(err, "scatter_written", {{"dir", outp.string()}});
    }

    if (!weights_layer.empty()) {
        const std::string c = pick_cell();
        const std::filesystem::path ckpt = run / "runs" / c / "best.ckpt";
        const nn::LoadedCheckpoint ck = nn::read_checkpoint(ckpt);
        const models::ModelConfig mc = models::ModelConfig::from_json(ck.meta.model_config);
        models::Model<float> model(mc);
        nn::load_warmstart(model.store(), ckpt, true);
        std::string fname = "weights-" + c + "-" + weights_layer + ".pgm";
        for (char& ch : fname)
            if (ch == '/' || ch == '.') ch = '_';
        fname.resize(fname.size() - 4);
        report::dump_weight_grid(model.store(), weights_layer, -0.4, 0.4, outp / (fname + ".pgm"));
        emit_event(err, "weights_written", {{"layer", weights_layer}, {"cell", c}});
    }

    if (volumes) {
        const std::string c = pick_cell();
        const std::filesystem::path ckpt = run / "runs" / c / "best.ckpt";
        const nn::LoadedCheckpoint ck = nn::read_checkpoint(ckpt);
        const models::ModelConfig mc = models::ModelConfig::from_json(ck.meta.model_config);
        models::Model<float> model(mc);
        nn::load_warmstart(model.store(), ckpt, true);
        const std::string ds_path =
            manifest.at("dataset_paths").at(to_string(mc.experiment)).get<std::string>();
        Dataset ds = dataio::normalize_dataset(segb::load_dataset(ds_path));
        training::TrainConfig tc;
        std::map<std::string, std::vector<std::pair<int, MaskGrid>>> by_volume;
        for (const auto& s : ds.test) {
            auto [img, tgt] = dataio::select_target(s, mc.experiment);
            nn::Tensor4<float> x(1, 1, img.rows, img.cols);
            std::copy(img.v.begin(), img.v.end(), x.v.begin());
            const auto pred = model.predict(x);
            Image pi(pred.h, pred.w);
            std::copy(pred.v.begin(), pred.v.end(), pi.v.begin());
            by_volume[s.volume_id].emplace_back(s.slice_index,
                                                metrics::binarize(pi, tc.threshold));
        }
        for (auto& [vid, masks] : by_volume) {
            const segb::VoxelGrid g = report::stack_volume(std::move(masks));
            segb::write_volume(outp / ("volume-" + c + "-" + vid + ".segb3d"), g);
        }
        emit_event(err, "volumes_written", {{"cell", c}});
    }

    out << outp.string() << "\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"segbench: desk-scale segmentation benchmark harness"};
    app.require_subcommand(1);

    // generate-synthetic
    int gs_n = 12, gs_shape = 64;
    uint64_t gs_seed = 0;
    bool gs_balanced = false;
    std::string gs_out = "data/synthetic";
    auto* gen = app.add_subcommand("generate-synthetic", "write a synthetic SEGB dataset");
    gen->add_option("--n", gs_n, "total slices (>= 3)");
    gen->add_option("--shape", gs_shape, "square slice size");
    gen->add_option("--seed", gs_seed, "generator seed");
    gen->add_flag("--balanced", gs_balanced, "larger lesion blobs");
    gen->add_option("--out", gs_out, "output directory")->required();

    // make-warmstart
    std::string mw_family = "plain", mw_out;
    double mw_scale = 0.125;
    int mw_depth = 5;
    uint64_t mw_seed = 0;
    auto* mw = app.add_subcommand("make-warmstart", "write an encoder-only checkpoint");
    mw->add_option("--family", mw_family, "encoder family (plain|residual|dense|dwsep)");
    mw->add_option("--width-scale", mw_scale, "channel width scale");
    mw->add_option("--depth", mw_depth, "encoder depth (3 or 5)");
    mw->add_option("--seed", mw_seed, "init seed");
    mw->add_option("--out", mw_out, "output checkpoint path")->required();

    // benchmark
    std::string bm_config, bm_out = "out";
    int bm_jobs = 1;
    bool bm_strict = false;
    auto* bm = app.add_subcommand("benchmark", "run the experiment matrix");
    bm->add_option("--config", bm_config, "benchmark config JSON")->required();
    bm->add_option("--out", bm_out, "output directory");
    bm->add_option("--jobs", bm_jobs, "parallel cells");
    bm->add_flag("--strict-repro", bm_strict, "byte-stable outputs (timings zeroed)");

    // evaluate
    std::string ev_ckpt, ev_dataset, ev_experiment = "lung-segmentation", ev_split = "test";
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint, no training");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--dataset", ev_dataset, "dataset manifest")->required();
    ev->add_option("--experiment", ev_experiment, "experiment kind");
    ev->add_option("--split", ev_split, "split to evaluate (train|val|test)");

    // report
    std::string rp_run, rp_out, rp_weights, rp_cell;
    bool rp_hist = false, rp_scatter = false, rp_volumes = false;
    int rp_bins = 100;
    auto* rp = app.add_subcommand("report", "emit analysis artifacts from a run");
    rp->add_option("--run", rp_run, "benchmark output directory")->required();
    rp->add_option("--out", rp_out, "report output directory (default <run>/report)");
    rp->add_flag("--histograms", rp_hist, "pixel-intensity histograms per experiment");
    rp->add_flag("--scatter", rp_scatter, "dice-vs-params scatter + correlation");
    rp->add_option("--weights", rp_weights, "dump a weight grid PGM for this layer");
    rp->add_option("--cell", rp_cell, "cell id for --weights/--volumes (default: first)");
    rp->add_flag("--volumes", rp_volumes, "stack predicted test masks per volume");
    rp->add_option("--bins", rp_bins, "histogram bins");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return kExitOk;
        }
        err << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_generate_synthetic(gs_n, gs_shape, gs_seed, gs_balanced, gs_out, out, err);
        if (mw->parsed())
            return cmd_make_warmstart(mw_family, mw_scale, mw_depth, mw_seed, mw_out, out, err);
        if (bm->parsed()) return cmd_benchmark(bm_config, bm_out, bm_jobs, bm_strict, out, err);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_dataset, ev_experiment, ev_split, out, err);
        if (rp->parsed())
            return cmd_report(rp_run, rp_out, rp_hist, rp_scatter, rp_weights, rp_cell,
                              rp_volumes, rp_bins, out, err);
    } catch (const CellError& e) {
        emit_event(err, "error", {{"kind", "cell"}, {"message", e.what()}});
        return kExitCellFailures;
    } catch (const Error& e) {
        emit_event(err, "error", {{"message", e.what()}});
        return kExitUsage;
    } catch (const std::exception& e) {
        emit_event(err, "error", {{"message", e.what()}});
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace segbench::cli
