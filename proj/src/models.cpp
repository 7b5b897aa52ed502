#include "segbench/models.hpp"

namespace segbench::models {

std::string to_string(Architecture a) {
    switch (a) {
    case Architecture::Unet: return "Unet";
    case Architecture::Linknet: return "Linknet";
    case Architecture::FPN: return "FPN";
    case Architecture::PSPNet: return "PSPNet";
    }
    throw ConfigError("bad Architecture");
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "Unet") return Architecture::Unet;
    if (s == "Linknet") return Architecture::Linknet;
    if (s == "FPN") return Architecture::FPN;
    if (s == "PSPNet") return Architecture::PSPNet;
    throw ConfigError("unknown architecture '" + s + "'");
}

std::string to_string(EncoderFamily f) {
    switch (f) {
    case EncoderFamily::PlainConvStack: return "plain";
    case EncoderFamily::Residual: return "residual";
    case EncoderFamily::DenselyConnected: return "dense";
    case EncoderFamily::DepthwiseSeparable: return "dwsep";
    }
    throw ConfigError("bad EncoderFamily");
}

EncoderFamily encoder_family_from_string(const std::string& s) {
    if (s == "plain") return EncoderFamily::PlainConvStack;
    if (s == "residual") return EncoderFamily::Residual;
    if (s == "dense") return EncoderFamily::DenselyConnected;
    if (s == "dwsep") return EncoderFamily::DepthwiseSeparable;
    throw ConfigError("unknown encoder family '" + s + "'");
}

std::vector<int> encoder_channels(EncoderFamily family, int depth, double width_scale) {
    static const int plain[5] = {64, 128, 256, 512, 512};
    static const int residual[5] = {64, 64, 128, 256, 512};
    static const int dense[5] = {64, 128, 256, 512, 1024};
    static const int dwsep[5] = {32, 64, 128, 256, 512};
    const int* base = nullptr;
    switch (family) {
    case EncoderFamily::PlainConvStack: base = plain; break;
    case EncoderFamily::Residual: base = residual; break;
    case EncoderFamily::DenselyConnected: base = dense; break;
    case EncoderFamily::DepthwiseSeparable: base = dwsep; break;
    }
    if (depth < 1 || depth > 5) throw ConfigError("encoder depth out of range");
    std::vector<int> out;
    for (int i = 0; i < depth; ++i) out.push_back(layers::scaled(base[i], width_scale));
    return out;
}

std::vector<int> unet_decoder_channels(int depth, double width_scale) {
    static const int base[5] = {256, 128, 64, 32, 16};
    std::vector<int> out;
    for (int i = 0; i < depth; ++i) out.push_back(layers::scaled(base[i], width_scale));
    return out;
}

int fpn_pyramid_channels(double ws) { return layers::scaled(256, ws); }
int fpn_segmentation_channels(double ws) { return layers::scaled(128, ws); }
int pspnet_output_channels(double ws) { return layers::scaled(512, ws); }
int linknet_final_channels(double ws) { return layers::scaled(32, ws); }
int dense_growth(double ws) { return layers::scaled(32, ws); }

void ModelConfig::validate() const {
    if (!(encoder.width_scale > 0)) throw ConfigError("width_scale must be positive");
    const int want = architecture == Architecture::PSPNet ? 3 : 5;
    if (encoder.depth != want)
        throw ConfigError(to_string(architecture) + " requires encoder depth " +
                          std::to_string(want) + ", got " + std::to_string(encoder.depth));
    if (weight_init.kind == WeightInit::Kind::Warmstart && weight_init.checkpoint.empty())
        throw ConfigError("warmstart init requires a checkpoint path");
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j;
    j["experiment"] = segbench::to_string(experiment);
    j["architecture"] = to_string(architecture);
    j["encoder"] = {{"family", to_string(encoder.family)},
                    {"depth", encoder.depth},
                    {"width_scale", encoder.width_scale}};
    if (weight_init.kind == WeightInit::Kind::Random) {
        j["weight_init"] = {{"kind", "random"}, {"seed", weight_init.seed}};
    } else {
        j["weight_init"] = {{"kind", "warmstart"}, {"checkpoint", weight_init.checkpoint}};
    }
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    c.encoder.family = encoder_family_from_string(j.at("encoder").at("family").get<std::string>());
    c.encoder.depth = j.at("encoder").at("depth").get<int>();
    c.encoder.width_scale = j.at("encoder").at("width_scale").get<double>();
    const auto& wi = j.at("weight_init");
    if (wi.at("kind") == "random") {
        c.weight_init.kind = WeightInit::Kind::Random;
        c.weight_init.seed = wi.at("seed").get<uint64_t>();
    } else if (wi.at("kind") == "warmstart") {
        c.weight_init.kind = WeightInit::Kind::Warmstart;
        c.weight_init.checkpoint = wi.at("checkpoint").get<std::string>();
    } else {
        throw ConfigError("unknown weight_init kind");
    }
    return c;
}

std::string ModelConfig::config_hash() const { return to_hex(fnv1a64(to_json().dump())); }

std::string ModelConfig::cell_id() const {
    const std::string init =
        weight_init.kind == WeightInit::Kind::Random ? "random" : "warmstart";
    return segbench::to_string(experiment) + "-" + to_string(architecture) + "-" +
           to_string(encoder.family) + "-" + init;
}

void validate_input_shape(const ModelConfig& cfg, int h, int w) {
    const int factor = 1 << cfg.encoder.depth;
    if (h < factor || w < factor || h % factor != 0 || w % factor != 0)
        throw ShapeError(to_string(cfg.architecture) + " with encoder depth " +
                         std::to_string(cfg.encoder.depth) + " requires input divisible by " +
                         std::to_string(factor) + ", got " + std::to_string(h) + "x" +
                         std::to_string(w));
}

Model<float> build(const ModelConfig& cfg, std::optional<std::pair<int, int>> expected_input_hw) {
    cfg.validate();
    if (expected_input_hw)
        validate_input_shape(cfg, expected_input_hw->first, expected_input_hw->second);
    return Model<float>(cfg);
}

} // namespace segbench::models
