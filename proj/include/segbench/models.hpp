#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segbench/nn/autodiff.hpp"
#include "segbench/nn/checkpoint.hpp"
#include "segbench/nn/param_store.hpp"
#include "segbench/slice.hpp"

namespace segbench::models {

enum class Architecture { Unet, Linknet, FPN, PSPNet };
enum class EncoderFamily { PlainConvStack, Residual, DenselyConnected, DepthwiseSeparable };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);
std::string to_string(EncoderFamily f);
EncoderFamily encoder_family_from_string(const std::string& s);

struct EncoderConfig {
    EncoderFamily family = EncoderFamily::PlainConvStack;
    int depth = 5;            // stages; each halves the spatial resolution
    double width_scale = 0.125;
};

struct WeightInit {
    enum class Kind { Random, Warmstart };
    Kind kind = Kind::Random;
    uint64_t seed = 0;          // Random
    std::string checkpoint;     // Warmstart
};

// One cell of the benchmark matrix.
struct ModelConfig {
    ExperimentKind experiment = ExperimentKind::LungSegmentation;
    Architecture architecture = Architecture::Unet;
    EncoderConfig encoder;
    WeightInit weight_init;

    // Benchmark contract: PSPNet runs encoder depth 3, the others depth 5.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    std::string config_hash() const;
    std::string cell_id() const; // <experiment>-<architecture>-<encoder>-<init>
};

// Stage output channels after width scaling, index 0 = stage 1 (/2).
std::vector<int> encoder_channels(EncoderFamily family, int depth, double width_scale);

// Head/decoder widths after scaling, exposed so tests can recompute
// parameter counts independently.
std::vector<int> unet_decoder_channels(int depth, double width_scale);
int fpn_pyramid_channels(double width_scale);
int fpn_segmentation_channels(double width_scale);
int pspnet_output_channels(double width_scale);
int linknet_final_channels(double width_scale);
int dense_growth(double width_scale);

constexpr double kFpnDropout = 0.2;
constexpr double kPspDropout = 0.2;
constexpr int kPspBins[4] = {1, 2, 3, 6};
constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

enum class RunMode { Train, Eval };

// Per-forward-pass context. Leaves created for parameters are recorded so
// their gradients can be pulled back into the store after backward().
template <class T>
struct FwdCtx {
    nn::Tape<T>* tape = nullptr;
    nn::ParamStore<T>* store = nullptr;
    RunMode mode = RunMode::Eval;
    RngStream dropout_rng{0};
    bool frozen_stats = false; // train-mode norms without running-stat updates

    std::map<std::string, nn::Var<T>> leaves;

    nn::Var<T> param(const std::string& name) {
        auto it = leaves.find(name);
        if (it != leaves.end()) return it->second;
        auto v = tape->leaf(store->at(name).value);
        leaves.emplace(name, v);
        return v;
    }

    bool training() const { return mode == RunMode::Train; }

    // Accumulates leaf gradients into the store.
    void collect_grads() {
        for (auto& [name, leaf] : leaves) {
            auto& g = store->at(name).grad;
            for (size_t i = 0; i < g.size(); ++i) g.v[i] += leaf->grad.v[i];
        }
    }
};

namespace layers {

inline int scaled(int base, double width_scale) {
    int c = static_cast<int>(std::lround(base * width_scale));
    return c < 1 ? 1 : c;
}

template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(nn::ParamStore<T>& s, std::string name, int in_c, int out_c, int k, int stride, int pad,
           bool bias)
        : name_(std::move(name)), stride_(stride), pad_(pad), has_bias_(bias) {
        s.add(name_ + ".weight", out_c, in_c, k, k, nn::InitKind::UniformFanIn, in_c * k * k);
        if (bias) s.add(name_ + ".bias", 1, out_c, 1, 1, nn::InitKind::Zero);
    }
    nn::Var<T> operator()(FwdCtx<T>& c, const nn::Var<T>& x) const {
        auto w = c.param(name_ + ".weight");
        nn::Var<T> b;
        if (has_bias_) b = c.param(name_ + ".bias");
        return nn::conv2d(*c.tape, x, w, b, stride_, pad_);
    }

private:
    std::string name_;
    int stride_ = 1, pad_ = 0;
    bool has_bias_ = true;
};

template <class T>
class DepthwiseConv2d {
public:
    DepthwiseConv2d() = default;
    DepthwiseConv2d(nn::ParamStore<T>& s, std::string name, int channels, int k, int stride,
                    int pad, bool bias)
        : name_(std::move(name)), stride_(stride), pad_(pad), has_bias_(bias) {
        s.add(name_ + ".weight", channels, 1, k, k, nn::InitKind::UniformFanIn, k * k);
        if (bias) s.add(name_ + ".bias", 1, channels, 1, 1, nn::InitKind::Zero);
    }
    nn::Var<T> operator()(FwdCtx<T>& c, const nn::Var<T>& x) const {
        auto w = c.param(name_ + ".weight");
        nn::Var<T> b;
        if (has_bias_) b = c.param(name_ + ".bias");
        return nn::depthwise_conv2d(*c.tape, x, w, b, stride_, pad_);
    }

private:
    std::string name_;
    int stride_ = 1, pad_ = 0;
    bool has_bias_ = true;
};

template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(nn::ParamStore<T>& s, std::string name, int channels) : name_(std::move(name)) {
        s.add(name_ + ".gamma", 1, channels, 1, 1, nn::InitKind::One);
        s.add(name_ + ".beta", 1, channels, 1, 1, nn::InitKind::Zero);
        s.add(name_ + ".running_mean", 1, channels, 1, 1, nn::InitKind::Zero, 0, false);
        s.add(name_ + ".running_var", 1, channels, 1, 1, nn::InitKind::One, 0, false);
    }
    nn::Var<T> operator()(FwdCtx<T>& c, const nn::Var<T>& x) const {
        auto gamma = c.param(name_ + ".gamma");
        auto beta = c.param(name_ + ".beta");
        auto& rm = c.store->at(name_ + ".running_mean").value;
        auto& rv = c.store->at(name_ + ".running_var").value;
        return nn::batch_norm(*c.tape, x, gamma, beta, rm, rv, c.training(), kBnMomentum, kBnEps,
                              c.frozen_stats);
    }

private:
    std::string name_;
};

// conv -> optional BN -> optional ReLU. Conv bias only when BN is absent.
template <class T>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(nn::ParamStore<T>& s, const std::string& name, int in_c, int out_c, int k,
              int stride, int pad, bool bn, bool relu)
        : conv_(s, name, in_c, out_c, k, stride, pad, !bn), use_bn_(bn), relu_(relu) {
        if (bn) bn_ = BatchNorm2d<T>(s, name + ".bn", out_c);
    }
    nn::Var<T> operator()(FwdCtx<T>& c, const nn::Var<T>& x) const {
        auto y = conv_(c, x);
        if (use_bn_) y = bn_(c, y);
        if (relu_) y = nn::relu(*c.tape, y);
        return y;
    }

private:
    Conv2d<T> conv_;
    BatchNorm2d<T> bn_;
    bool use_bn_ = false;
    bool relu_ = true;
};

} // namespace layers

// ---- encoders ---------------------------------------------------------------

template <class T>
class Encoder {
public:
    virtual ~Encoder() = default;
    // Features f1..fD at resolutions /2../2^D, stage output channels chs().
    virtual std::vector<nn::Var<T>> apply(FwdCtx<T>& c, const nn::Var<T>& x) const = 0;
    const std::vector<int>& chs() const { return chs_; }

protected:
    std::vector<int> chs_;
};

template <class T>
std::unique_ptr<Encoder<T>> make_encoder(nn::ParamStore<T>& store, const EncoderConfig& cfg,
                                         int in_channels);

// ---- model ------------------------------------------------------------------

template <class T>
class Decoder {
public:
    virtual ~Decoder() = default;
    // Consumes encoder features, returns (B,1,H,W) in [0,1] (final sigmoid).
    virtual nn::Var<T> apply(FwdCtx<T>& c, const nn::Var<T>& input,
                             const std::vector<nn::Var<T>>& feats) const = 0;
};

// A constructed architecture bound to its ParamStore. Construction
// registers every parameter; forward() replays the wiring on a fresh tape.
template <class T>
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<T>& store() { return store_; }
    const nn::ParamStore<T>& store() const { return store_; }

    // x: (B,1,H,W) with H, W divisible by 2^depth.
    nn::Var<T> forward(FwdCtx<T>& ctx, const nn::Var<T>& x) const;

    // Eval-mode forward; tape discarded.
    nn::Tensor4<T> predict(const nn::Tensor4<T>& x) const;

private:
    ModelConfig cfg_;
    nn::ParamStore<T> store_;
    std::unique_ptr<Encoder<T>> encoder_;
    std::unique_ptr<Decoder<T>> decoder_;
};

// Validates the benchmark contract (depth pairing, width sanity) and, when
// the expected input size is known, divisibility by 2^depth, then builds.
Model<float> build(const ModelConfig& cfg,
                   std::optional<std::pair<int, int>> expected_input_hw = std::nullopt);

void validate_input_shape(const ModelConfig& cfg, int h, int w);

} // namespace segbench::models

#include "segbench/models_impl.hpp"
