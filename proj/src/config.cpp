#include "segbench/config.hpp"

#include <fstream>

namespace segbench::cli {

namespace {

uint64_t derive_cell_seed(uint64_t global_seed, const std::string& cell_id) {
    return fnv1a64(cell_id, fnv1a64(&global_seed, sizeof global_seed));
}

struct InitSpec {
    models::WeightInit::Kind kind;
    bool explicit_seed = false;
    uint64_t seed = 0;
    std::filesystem::path warmstart; // file or directory
};

} // namespace

BenchmarkConfig BenchmarkConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }

    BenchmarkConfig cfg;
    cfg.raw = j;
    const std::filesystem::path base = path.parent_path();
    try {
        std::vector<ExperimentKind> experiments;
        for (const auto& e : j.at("experiments"))
            experiments.push_back(experiment_from_string(e.get<std::string>()));
        if (experiments.empty()) throw ConfigError("config lists no experiments");

        if (j.contains("datasets")) {
            for (const auto& [key, val] : j.at("datasets").items())
                cfg.dataset_paths[experiment_from_string(key)] = base / val.get<std::string>();
        }
        if (j.contains("dataset")) {
            const std::filesystem::path p = base / j.at("dataset").get<std::string>();
            for (ExperimentKind ex : experiments)
                if (!cfg.dataset_paths.count(ex)) cfg.dataset_paths[ex] = p;
        }
        for (ExperimentKind ex : experiments)
            if (!cfg.dataset_paths.count(ex))
                throw ConfigError("no dataset configured for experiment " + to_string(ex));

        std::vector<models::Architecture> architectures;
        for (const auto& a : j.at("architectures"))
            architectures.push_back(models::architecture_from_string(a.get<std::string>()));
        if (architectures.empty()) throw ConfigError("config lists no architectures");

        std::vector<models::EncoderConfig> encoders;
        for (const auto& e : j.at("encoders")) {
            models::EncoderConfig ec;
            ec.family = models::encoder_family_from_string(e.at("family").get<std::string>());
            ec.width_scale = e.value("width_scale", 0.125);
            encoders.push_back(ec);
        }
        if (encoders.empty()) throw ConfigError("config lists no encoders");

        std::vector<InitSpec> inits;
        for (const auto& e : j.at("inits")) {
            InitSpec is;
            if (e.is_string()) {
                if (e.get<std::string>() != "random")
                    throw ConfigError("unknown init '" + e.get<std::string>() + "'");
                is.kind = models::WeightInit::Kind::Random;
            } else if (e.contains("random")) {
                is.kind = models::WeightInit::Kind::Random;
                is.explicit_seed = true;
                is.seed = e.at("random").get<uint64_t>();
            } else if (e.contains("warmstart")) {
                is.kind = models::WeightInit::Kind::Warmstart;
                is.warmstart = base / e.at("warmstart").get<std::string>();
            } else {
                throw ConfigError("init entries must be \"random\", {\"random\": seed} or "
                                  "{\"warmstart\": path}");
            }
            inits.push_back(is);
        }
        if (inits.empty()) throw ConfigError("config lists no inits");

        cfg.seed = j.value("seed", 0ull);
        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.lr = t.value("lr", cfg.train.lr);
            cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
            cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
            cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
            cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
            cfg.train.loss_eps = t.value("loss_eps", cfg.train.loss_eps);
            cfg.train.threshold = t.value("threshold", cfg.train.threshold);
            cfg.train.augment = t.value("augment", cfg.train.augment);
            cfg.train.plain_sgd = t.value("plain_sgd", cfg.train.plain_sgd);
            if (t.contains("empty_rule"))
                cfg.train.empty_rule =
                    metrics::empty_rule_from_string(t.at("empty_rule").get<std::string>());
        }
        cfg.train.seed = cfg.seed;
        cfg.train.validate();

        for (ExperimentKind ex : experiments)
            for (models::Architecture ar : architectures)
                for (const models::EncoderConfig& en : encoders)
                    for (const InitSpec& is : inits) {
                        models::ModelConfig mc;
                        mc.experiment = ex;
                        mc.architecture = ar;
                        mc.encoder = en;
                        mc.encoder.depth = ar == models::Architecture::PSPNet ? 3 : 5;
                        mc.weight_init.kind = is.kind;
                        if (is.kind == models::WeightInit::Kind::Random) {
                            mc.weight_init.seed = is.explicit_seed
                                                      ? is.seed
                                                      : derive_cell_seed(cfg.seed, mc.cell_id());
                        } else {
                            std::filesystem::path p = is.warmstart;
                            if (std::filesystem::is_directory(p))
                                p /= models::to_string(en.family) + ".ckpt";
                            mc.weight_init.checkpoint = p.string();
                        }
                        mc.validate();
                        cfg.seed_derived.push_back(
                            is.kind == models::WeightInit::Kind::Random && !is.explicit_seed);
                        cfg.matrix.push_back(std::move(mc));
                    }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": bad config schema (" + e.what() + ")");
    }
    return cfg;
}

void BenchmarkConfig::apply_seed(uint64_t new_seed) {
    seed = new_seed;
    train.seed = new_seed;
    for (size_t i = 0; i < matrix.size(); ++i) {
        if (i < seed_derived.size() && !seed_derived[i]) continue;
        if (matrix[i].weight_init.kind != models::WeightInit::Kind::Random) continue;
        matrix[i].weight_init.seed = derive_cell_seed(new_seed, matrix[i].cell_id());
    }
}

} // namespace segbench::cli
