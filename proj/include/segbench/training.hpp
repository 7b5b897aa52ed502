#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "segbench/dataio.hpp"
#include "segbench/metrics.hpp"
#include "segbench/models.hpp"
#include "segbench/nn/param_store.hpp"

namespace segbench::training {

struct TrainConfig {
    int epochs = 100;    // desk-scale default, not a reported value
    int batch_size = 2;  // ditto
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    double loss_eps = 1e-5;  // Soft Dice Loss epsilon
    double threshold = 0.5;  // binarization tau
    bool augment = true;
    bool plain_sgd = false;  // fidelity arm: w -= lr * grad, no moments
    metrics::EmptyRule empty_rule = metrics::EmptyRule::PaperLiteral;
    bool strict_repro = false; // zero recorded timings so outputs are byte-stable

    void validate() const;
};

// Soft Dice Loss on one prediction/target pair, accumulated in double:
// 1 - 2*sum(Y*Yhat) / (sum(Y^2) + sum(Yhat^2) + eps).
double soft_dice_loss(const Image& pred, const MaskGrid& target, double eps);

// Batch reduction is the mean of per-sample losses.
double soft_dice_loss_sample(const nn::Tensor4<float>& pred, int sample, const MaskGrid& target,
                             double eps);

// Adam with bias correction; weight_decay folds into the gradient (L2).
template <class T>
void adam_step(nn::ParamStore<T>& store, const TrainConfig& cfg) {
    store.bump_step();
    const double t = static_cast<double>(store.step_count());
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& name : store.names()) {
        auto& p = store.at(name);
        if (!p.trainable) continue;
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double g = static_cast<double>(p.grad.v[i]) +
                             cfg.weight_decay * static_cast<double>(p.value.v[i]);
            const double m = cfg.beta1 * static_cast<double>(p.adam_m.v[i]) + (1.0 - cfg.beta1) * g;
            const double v =
                cfg.beta2 * static_cast<double>(p.adam_v.v[i]) + (1.0 - cfg.beta2) * g * g;
            p.adam_m.v[i] = static_cast<T>(m);
            p.adam_v.v[i] = static_cast<T>(v);
            p.value.v[i] -= static_cast<T>(cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps));
        }
    }
}

template <class T>
void sgd_step(nn::ParamStore<T>& store, const TrainConfig& cfg) {
    store.bump_step();
    for (const auto& name : store.names()) {
        auto& p = store.at(name);
        if (!p.trainable) continue;
        for (size_t i = 0; i < p.value.size(); ++i)
            p.value.v[i] -= static_cast<T>(cfg.lr * static_cast<double>(p.grad.v[i]));
    }
}

template <class T>
void optimizer_step(nn::ParamStore<T>& store, const TrainConfig& cfg) {
    if (cfg.plain_sgd)
        sgd_step(store, cfg);
    else
        adam_step(store, cfg);
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double train_s_per_batch = 0;
    double val_s_per_batch = 0;
};

struct RunState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::string best_checkpoint;
    std::vector<EpochLog> epoch_log;
};

struct EpochOutcome {
    double loss = 0;
    double s_per_batch = 0;
};

// Algorithm skeleton: per epoch train then validate; persist exactly when
// validation improves (strict <, so ties keep the earlier epoch).
template <class TrainFn, class ValFn, class PersistFn>
RunState run_training_loop(int epochs, TrainFn&& train_epoch, ValFn&& validate,
                           PersistFn&& persist) {
    RunState st;
    for (int ep = 1; ep <= epochs; ++ep) {
        const EpochOutcome tr = train_epoch(ep);
        const EpochOutcome va = validate(ep);
        if (!std::isfinite(tr.loss) || !std::isfinite(va.loss))
            throw CellError("non-finite loss at epoch " + std::to_string(ep));
        st.epoch_log.push_back({ep, tr.loss, va.loss, tr.s_per_batch, va.s_per_batch});
        if (va.loss < st.best_val_loss) {
            st.best_val_loss = va.loss;
            st.best_epoch = ep;
            persist(ep, va.loss);
        }
    }
    return st;
}

void write_epoch_log(const std::filesystem::path& path, const RunState& st);

// Mean per-slice hard metrics (fractions in [0,1]) under cfg's threshold,
// loss epsilon and empty rule.
metrics::HardMetrics evaluate_model(models::Model<float>& model,
                                    const std::vector<std::pair<Image, MaskGrid>>& pairs,
                                    const TrainConfig& cfg);

struct CellResult {
    RunState state;
    metrics::MetricsRecord record;
};

using LogFn = std::function<void(const std::string&)>;

// One benchmark cell end to end: normalize, select targets, train with
// per-epoch augmentation, keep the min-validation checkpoint, evaluate it
// on the test split. Artifacts (best.ckpt, log.csv) land under cell_dir.
CellResult run_experiment_cell(const Dataset& raw_dataset, const models::ModelConfig& model_config,
                               const TrainConfig& cfg, const std::filesystem::path& cell_dir,
                               const LogFn& log = {});

// Runs every cell (jobs > 1: cell-level parallelism); failed cells produce
// status=failed records instead of aborting the matrix. Record order equals
// matrix order regardless of execution order.
std::vector<metrics::MetricsRecord> run_benchmark(
    const std::vector<models::ModelConfig>& matrix,
    const std::map<ExperimentKind, const Dataset*>& datasets, const TrainConfig& cfg, int jobs,
    const std::filesystem::path& runs_dir, const LogFn& log = {});

} // namespace segbench::training
