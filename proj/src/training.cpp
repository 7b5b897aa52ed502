#include "segbench/training.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "segbench/augment.hpp"
#include "segbench/nn/autodiff.hpp"
#include "segbench/nn/checkpoint.hpp"

namespace segbench::training {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
        throw ConfigError("adam betas must lie in (0,1)");
    if (!(adam_eps > 0) || !(loss_eps > 0)) throw ConfigError("epsilons must be > 0");
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0,1)");
    if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
}

double soft_dice_loss(const Image& pred, const MaskGrid& target, double eps) {
    require_same_shape(pred.rows, pred.cols, target.rows, target.cols, "soft_dice_loss");
    double inter = 0, psq = 0, tsq = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const double p = pred.v[i];
        const double t = target.v[i];
        inter += p * t;
        psq += p * p;
        tsq += t * t;
    }
    return 1.0 - 2.0 * inter / (tsq + psq + eps);
}

double soft_dice_loss_sample(const nn::Tensor4<float>& pred, int sample, const MaskGrid& target,
                             double eps) {
    if (pred.c != 1 || pred.h != target.rows || pred.w != target.cols)
        throw ShapeError("soft_dice_loss_sample: prediction " + pred.shape_str() +
                         " incompatible with target");
    double inter = 0, psq = 0, tsq = 0;
    const float* p = &pred.at(sample, 0, 0, 0);
    for (size_t i = 0; i < target.v.size(); ++i) {
        const double pv = p[i];
        const double tv = target.v[i];
        inter += pv * tv;
        psq += pv * pv;
        tsq += tv * tv;
    }
    return 1.0 - 2.0 * inter / (tsq + psq + eps);
}

void write_epoch_log(const std::filesystem::path& path, const RunState& st) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,train_s,val_s\n";
    char buf[192];
    for (const auto& e : st.epoch_log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.4f,%.4f", e.epoch, e.train_loss, e.val_loss,
                      e.train_s_per_batch, e.val_s_per_batch);
        out << buf << "\n";
    }
}

namespace {

using Pair = std::pair<Image, MaskGrid>;

std::vector<Pair> select_pairs(const std::vector<Slice>& split, ExperimentKind ex) {
    std::vector<Pair> out;
    out.reserve(split.size());
    for (const auto& s : split) out.push_back(dataio::select_target(s, ex));
    return out;
}

nn::Tensor4<float> to_batch(const std::vector<const Pair*>& items) {
    const int h = items.front()->first.rows, w = items.front()->first.cols;
    nn::Tensor4<float> x(static_cast<int>(items.size()), 1, h, w);
    for (size_t b = 0; b < items.size(); ++b)
        std::copy(items[b]->first.v.begin(), items[b]->first.v.end(),
                  x.v.begin() + static_cast<long>(b * items[b]->first.size()));
    return x;
}

nn::Tensor4<float> masks_to_batch(const std::vector<const Pair*>& items) {
    const int h = items.front()->second.rows, w = items.front()->second.cols;
    nn::Tensor4<float> y(static_cast<int>(items.size()), 1, h, w);
    for (size_t b = 0; b < items.size(); ++b)
        for (size_t i = 0; i < items[b]->second.v.size(); ++i)
            y.v[b * items[b]->second.size() + i] = items[b]->second.v[i];
    return y;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

metrics::HardMetrics evaluate_model(models::Model<float>& model,
                                    const std::vector<std::pair<Image, MaskGrid>>& pairs,
                                    const TrainConfig& cfg) {
    if (pairs.empty()) throw ValidationError("evaluate_model: empty split");
    double sens = 0, spec = 0, dice = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        nn::Tensor4<float> x(1, 1, pairs[i].first.rows, pairs[i].first.cols);
        std::copy(pairs[i].first.v.begin(), pairs[i].first.v.end(), x.v.begin());
        const nn::Tensor4<float> out = model.predict(x);
        Image pred(out.h, out.w);
        std::copy(out.v.begin(), out.v.end(), pred.v.begin());
        const MaskGrid bin = metrics::binarize(pred, cfg.threshold);
        const metrics::HardMetrics m =
            metrics::hard_metrics(metrics::confusion(bin, pairs[i].second), cfg.loss_eps,
                                  cfg.empty_rule);
        sens += m.sens;
        spec += m.spec;
        dice += m.dice;
    }
    const double n = static_cast<double>(pairs.size());
    return {sens / n, spec / n, dice / n};
}

CellResult run_experiment_cell(const Dataset& raw_dataset, const models::ModelConfig& model_config,
                               const TrainConfig& cfg, const std::filesystem::path& cell_dir,
                               const LogFn& log) {
    cfg.validate();
    model_config.validate();
    if (raw_dataset.train.empty() || raw_dataset.val.empty() || raw_dataset.test.empty())
        throw ValidationError("run_experiment_cell: all splits must be nonempty");

    const Dataset ds = dataio::normalize_dataset(raw_dataset);
    const auto train_pairs = select_pairs(ds.train, model_config.experiment);
    const auto val_pairs = select_pairs(ds.val, model_config.experiment);
    const auto test_pairs = select_pairs(ds.test, model_config.experiment);

    const int h = train_pairs.front().first.rows;
    const int w = train_pairs.front().first.cols;
    models::Model<float> model = models::build(model_config, std::make_pair(h, w));

    nn::init_random(model.store(), RngStream(model_config.weight_init.seed));
    if (model_config.weight_init.kind == models::WeightInit::Kind::Warmstart) {
        const auto rep =
            nn::load_warmstart(model.store(), model_config.weight_init.checkpoint, false);
        if (log)
            log("warmstart loaded=" + std::to_string(rep.loaded.size()) +
                " skipped=" + std::to_string(rep.skipped.size()) +
                " unused=" + std::to_string(rep.unused.size()));
    }

    std::filesystem::create_directories(cell_dir);
    const std::filesystem::path ckpt_path = cell_dir / "best.ckpt";

    const RngStream cell_rng(cfg.seed);
    const RngStream shuffle_rng = cell_rng.split(1);
    const RngStream augment_rng = cell_rng.split(2);
    const RngStream dropout_rng = cell_rng.split(3);

    auto train_epoch = [&](int epoch) -> EpochOutcome {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<size_t> order(train_pairs.size());
        std::iota(order.begin(), order.end(), size_t{0});
        RngStream sh = shuffle_rng.split(static_cast<uint64_t>(epoch));
        sh.shuffle(order);
        RngStream aug_ep = augment_rng.split(static_cast<uint64_t>(epoch));
        RngStream drop_ep = dropout_rng.split(static_cast<uint64_t>(epoch));

        double loss_sum = 0;
        size_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Pair> augmented;
            std::vector<const Pair*> items;
            for (size_t k = start; k < end; ++k) {
                const Pair& p = train_pairs[order[k]];
                if (cfg.augment) {
                    RngStream s = aug_ep.split(static_cast<uint64_t>(k));
                    const augment::AugmentParams ap = augment::sample_params(s);
                    augmented.push_back(augment::apply(p.first, p.second, ap));
                } else {
                    augmented.push_back(p);
                }
            }
            for (const auto& p : augmented) items.push_back(&p);

            nn::Tape<float> tape;
            models::FwdCtx<float> ctx;
            ctx.tape = &tape;
            ctx.store = &model.store();
            ctx.mode = models::RunMode::Train;
            ctx.dropout_rng = drop_ep.split(n_batches);
            auto pred = model.forward(ctx, tape.leaf(to_batch(items)));
            auto target = tape.leaf(masks_to_batch(items));
            auto loss = nn::soft_dice_loss_batch(tape, pred, target, cfg.loss_eps);
            const double loss_v = loss->val.v[0];
            if (!std::isfinite(loss_v))
                throw CellError("training diverged: non-finite loss at epoch " +
                                std::to_string(epoch));
            tape.backward(loss);
            model.store().zero_grads();
            ctx.collect_grads();
            optimizer_step(model.store(), cfg);
            loss_sum += loss_v * static_cast<double>(items.size());
            ++n_batches;
        }
        return {loss_sum / static_cast<double>(order.size()),
                seconds_since(t0) / static_cast<double>(n_batches)};
    };

    auto validate = [&](int) -> EpochOutcome {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0;
        size_t n_batches = 0;
        for (size_t start = 0; start < val_pairs.size(); start += cfg.batch_size) {
            const size_t end = std::min(val_pairs.size(), start + cfg.batch_size);
            std::vector<const Pair*> items;
            for (size_t k = start; k < end; ++k) items.push_back(&val_pairs[k]);
            nn::Tensor4<float> x = to_batch(items);
            const nn::Tensor4<float> out = model.predict(x);
            for (size_t k = 0; k < items.size(); ++k)
                loss_sum += soft_dice_loss_sample(out, static_cast<int>(k), items[k]->second,
                                                  cfg.loss_eps);
            ++n_batches;
        }
        return {loss_sum / static_cast<double>(val_pairs.size()),
                seconds_since(t0) / static_cast<double>(n_batches)};
    };

    auto persist = [&](int epoch, double val_loss) {
        nn::CheckpointMeta meta;
        meta.config_hash = model_config.config_hash();
        meta.model_config = model_config.to_json();
        meta.epoch = epoch;
        meta.val_loss = val_loss;
        nn::save_checkpoint(model.store(), ckpt_path, meta);
    };

    RunState st = run_training_loop(cfg.epochs, train_epoch, validate, persist);
    st.best_checkpoint = ckpt_path.string();
    if (cfg.strict_repro)
        for (auto& e : st.epoch_log) e.train_s_per_batch = e.val_s_per_batch = 0.0;
    write_epoch_log(cell_dir / "log.csv", st);

    // evaluate the persisted best checkpoint, not the final weights
    models::Model<float> best_model = models::build(model_config, std::make_pair(h, w));
    nn::load_warmstart(best_model.store(), ckpt_path, true);
    const metrics::HardMetrics m = evaluate_model(best_model, test_pairs, cfg);

    metrics::MetricsRecord rec;
    rec.experiment = to_string(model_config.experiment);
    rec.architecture = models::to_string(model_config.architecture);
    rec.encoder = models::to_string(model_config.encoder.family);
    rec.weight_init =
        model_config.weight_init.kind == models::WeightInit::Kind::Random ? "random" : "warmstart";
    rec.sens = 100.0 * m.sens;
    rec.spec = 100.0 * m.spec;
    rec.dice = 100.0 * m.dice;
    rec.params_millions = static_cast<double>(nn::count_params(model.store())) / 1e6;
    double tr_s = 0, va_s = 0;
    for (const auto& e : st.epoch_log) {
        tr_s += e.train_s_per_batch;
        va_s += e.val_s_per_batch;
    }
    rec.train_s_per_batch = tr_s / static_cast<double>(st.epoch_log.size());
    rec.val_s_per_batch = va_s / static_cast<double>(st.epoch_log.size());
    rec.ok = true;

    return {std::move(st), std::move(rec)};
}

std::vector<metrics::MetricsRecord> run_benchmark(
    const std::vector<models::ModelConfig>& matrix,
    const std::map<ExperimentKind, const Dataset*>& datasets, const TrainConfig& cfg, int jobs,
    const std::filesystem::path& runs_dir, const LogFn& log) {
    if (matrix.empty()) throw ConfigError("run_benchmark: empty matrix");
    if (jobs < 1) jobs = 1;

    std::vector<metrics::MetricsRecord> records(matrix.size());
    std::mutex log_mu;
    auto locked_log = [&](const std::string& s) {
        if (!log) return;
        std::lock_guard<std::mutex> lk(log_mu);
        log(s);
    };

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= matrix.size()) return;
            const auto& mc = matrix[i];
            const std::string cell = mc.cell_id();
            locked_log("cell_start " + cell);
            try {
                auto it = datasets.find(mc.experiment);
                if (it == datasets.end() || it->second == nullptr)
                    throw ConfigError("no dataset for experiment " + to_string(mc.experiment));
                CellResult res = run_experiment_cell(*it->second, mc, cfg, runs_dir / cell,
                                                     locked_log);
                records[i] = std::move(res.record);
                locked_log("cell_done " + cell);
            } catch (const std::exception& e) {
                metrics::MetricsRecord rec;
                rec.experiment = to_string(mc.experiment);
                rec.architecture = models::to_string(mc.architecture);
                rec.encoder = models::to_string(mc.encoder.family);
                rec.weight_init = mc.weight_init.kind == models::WeightInit::Kind::Random
                                      ? "random"
                                      : "warmstart";
                rec.ok = false;
                records[i] = std::move(rec);
                locked_log("cell_failed " + cell + ": " + e.what());
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return records;
}

} // namespace segbench::training
