#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "segbench/cli.hpp"
#include "segbench/nn/checkpoint.hpp"
#include "segbench/segb.hpp"

using namespace segbench;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("segb_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    return code;
}

void write_config(const fs::path& path, const std::string& dataset_rel, int epochs) {
    std::ofstream out(path);
    out << R"({
  "dataset": ")" << dataset_rel << R"(",
  "experiments": ["lung-segmentation"],
  "architectures": ["Unet"],
  "encoders": [{"family": "plain", "width_scale": 0.03125}],
  "inits": ["random"],
  "seed": 21,
  "train": {"epochs": )" << epochs << R"(, "batch_size": 4, "augment": false}
})";
}

} // namespace

TEST_CASE("generate-synthetic writes identical directories for the same flags") {
    TempDir td("gen");
    const auto a = (td.path / "a").string();
    const auto b = (td.path / "b").string();
    CHECK(run_cli({"generate-synthetic", "--n", "6", "--shape", "32", "--seed", "7", "--out", a}) ==
          cli::kExitOk);
    CHECK(run_cli({"generate-synthetic", "--n", "6", "--shape", "32", "--seed", "7", "--out", b}) ==
          cli::kExitOk);
    CHECK(segb::dataset_digest(fs::path(a) / "manifest.json") ==
          segb::dataset_digest(fs::path(b) / "manifest.json"));
}

TEST_CASE("generate-synthetic rejects n < 3 with a usage error") {
    TempDir td("gen2");
    CHECK(run_cli({"generate-synthetic", "--n", "2", "--out", (td.path / "x").string()}) ==
          cli::kExitUsage);
}

TEST_CASE("benchmark -> evaluate -> report flow on a one-cell matrix") {
    TempDir td("flow");
    const auto data = (td.path / "data").string();
    REQUIRE(run_cli({"generate-synthetic", "--n", "6", "--shape", "32", "--seed", "3", "--out",
                     data}) == cli::kExitOk);
    write_config(td.path / "config.json", "data/manifest.json", 2);

    const auto out = (td.path / "out").string();
    CHECK(run_cli({"benchmark", "--config", (td.path / "config.json").string(), "--out", out}) ==
          cli::kExitOk);
    CHECK(fs::exists(fs::path(out) / "metrics.csv"));
    CHECK(fs::exists(fs::path(out) / "keys-values.csv"));
    CHECK(fs::exists(fs::path(out) / "run_manifest.json"));
    const fs::path ckpt =
        fs::path(out) / "runs" / "lung-segmentation-Unet-plain-random" / "best.ckpt";
    REQUIRE(fs::exists(ckpt));

    std::string row;
    CHECK(run_cli({"evaluate", "--checkpoint", ckpt.string(), "--dataset",
                   data + "/manifest.json", "--experiment", "lung-segmentation", "--split",
                   "val"},
                  &row) == cli::kExitOk);
    CHECK(row.find("lung-segmentation,Unet,plain") != std::string::npos);

    std::string row2;
    CHECK(run_cli({"evaluate", "--checkpoint", ckpt.string(), "--dataset",
                   data + "/manifest.json", "--experiment", "lung-segmentation", "--split",
                   "val"},
                  &row2) == cli::kExitOk);
    CHECK(row == row2);

    CHECK(run_cli({"report", "--run", out, "--histograms", "--weights",
                   "encoder.s1.conv1.weight", "--volumes"}) == cli::kExitOk);
    CHECK(fs::exists(fs::path(out) / "report" / "histogram-lung-segmentation-images.csv"));
    CHECK(fs::exists(fs::path(out) / "report" / "histogram-lung-segmentation-masks.csv"));
    bool found_pgm = false, found_vol = false;
    for (const auto& e : fs::directory_iterator(fs::path(out) / "report")) {
        if (e.path().extension() == ".pgm") found_pgm = true;
        if (e.path().extension() == ".segb3d") found_vol = true;
    }
    CHECK(found_pgm);
    CHECK(found_vol);
}

TEST_CASE("evaluate with a missing checkpoint exits 2") {
    TempDir td("ev");
    CHECK(run_cli({"evaluate", "--checkpoint", (td.path / "none.ckpt").string(), "--dataset",
                   (td.path / "none.json").string()}) == cli::kExitUsage);
}

TEST_CASE("benchmark with an invalid config exits 2") {
    TempDir td("badcfg");
    std::ofstream out(td.path / "config.json");
    out << "{\"experiments\": []}";
    out.close();
    CHECK(run_cli({"benchmark", "--config", (td.path / "config.json").string(), "--out",
                   (td.path / "o").string()}) == cli::kExitUsage);
}

TEST_CASE("report on a missing run directory exits 2") {
    TempDir td("rep");
    CHECK(run_cli({"report", "--run", (td.path / "nope").string()}) == cli::kExitUsage);
}

TEST_CASE("make-warmstart writes an encoder-only checkpoint") {
    TempDir td("warm");
    const auto p = (td.path / "plain.ckpt").string();
    CHECK(run_cli({"make-warmstart", "--family", "plain", "--width-scale", "0.0625", "--depth",
                   "5", "--seed", "4", "--out", p}) == cli::kExitOk);
    const auto ck = nn::read_checkpoint(p);
    CHECK(ck.names.size() > 0);
    for (const auto& n : ck.names) CHECK(n.rfind("encoder.", 0) == 0);
}

TEST_CASE("unknown subcommand exits 2, --help exits 0") {
    CHECK(run_cli({"frobnicate"}) == cli::kExitUsage);
    std::string help;
    CHECK(run_cli({"--help"}, &help) == cli::kExitOk);
    CHECK(help.find("benchmark") != std::string::npos);
}

TEST_CASE("a failing cell yields exit 1 and a failed row, others unaffected") {
    TempDir td("fail1");
    const auto data = (td.path / "data").string();
    REQUIRE(run_cli({"generate-synthetic", "--n", "6", "--shape", "32", "--seed", "8", "--out",
                     data}) == cli::kExitOk);
    std::ofstream cfg(td.path / "config.json");
    cfg << R"({
  "dataset": "data/manifest.json",
  "experiments": ["lung-segmentation"],
  "architectures": ["Unet"],
  "encoders": [{"family": "plain", "width_scale": 0.03125}],
  "inits": ["random", {"warmstart": "missing-dir"}],
  "seed": 4,
  "train": {"epochs": 1, "batch_size": 8, "augment": false}
})";
    cfg.close();
    const auto out = (td.path / "out").string();
    CHECK(run_cli({"benchmark", "--config", (td.path / "config.json").string(), "--out", out}) ==
          cli::kExitCellFailures);
    const auto records = metrics::read_metrics_csv(fs::path(out) / "metrics.csv");
    REQUIRE(records.size() == 2);
    CHECK(records[0].ok);
    CHECK_FALSE(records[1].ok);
}

TEST_CASE("SEGBENCH_SEED overrides the manifest seed") {
    TempDir td("envseed");
    const auto data = (td.path / "data").string();
    REQUIRE(run_cli({"generate-synthetic", "--n", "6", "--shape", "32", "--seed", "2", "--out",
                     data}) == cli::kExitOk);
    write_config(td.path / "config.json", "data/manifest.json", 1);

    setenv("SEGBENCH_SEED", "999", 1);
    const auto out = (td.path / "out").string();
    CHECK(run_cli({"benchmark", "--config", (td.path / "config.json").string(), "--out", out}) ==
          cli::kExitOk);
    unsetenv("SEGBENCH_SEED");

    std::ifstream in(fs::path(out) / "run_manifest.json");
    std::string manifest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(manifest.find("\"seed\": 999") != std::string::npos);
}
