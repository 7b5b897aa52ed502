#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "segbench/rng.hpp"
#include "segbench/segb.hpp"
#include "segbench/synthetic.hpp"

using namespace segbench;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("segb_test_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<long>(bytes.size()));
}

} // namespace

TEST_CASE("image and mask files round-trip bit-exactly") {
    TempDir td("roundtrip");
    RngStream rng(1);
    Image img(9, 13);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1000, 400));
    MaskGrid m(9, 13);
    for (auto& v : m.v) v = rng.bernoulli(0.4) ? 1 : 0;

    segb::write_image(td.path / "a.segb", img);
    segb::write_mask(td.path / "m.segb", m);
    CHECK(segb::read_image(td.path / "a.segb") == img);
    CHECK(segb::read_mask(td.path / "m.segb") == m);

    // rewriting produces identical bytes
    auto before = slurp(td.path / "a.segb");
    segb::write_image(td.path / "a.segb", img);
    CHECK(slurp(td.path / "a.segb") == before);
}

TEST_CASE("corrupt slice files are rejected with the file path") {
    TempDir td("corrupt");
    Image img(8, 8, 1.0f);
    const fs::path p = td.path / "x.segb";
    segb::write_image(p, img);

    SUBCASE("bad magic") {
        auto bytes = slurp(p);
        bytes[0] = 'Z';
        spit(p, bytes);
        CHECK_THROWS_WITH_AS(segb::read_image(p), doctest::Contains("x.segb"), FormatError);
    }
    SUBCASE("bad version") {
        auto bytes = slurp(p);
        bytes[4] = 9;
        spit(p, bytes);
        CHECK_THROWS_AS(segb::read_image(p), FormatError);
    }
    SUBCASE("truncated payload") {
        auto bytes = slurp(p);
        bytes.resize(bytes.size() - 5);
        spit(p, bytes);
        CHECK_THROWS_AS(segb::read_image(p), FormatError);
    }
    SUBCASE("mask with value 7") {
        MaskGrid m(8, 8);
        segb::write_mask(p, m);
        auto bytes = slurp(p);
        bytes[14 + 3] = 7;
        spit(p, bytes);
        CHECK_THROWS_WITH_AS(segb::read_mask(p), doctest::Contains("x.segb"), ValidationError);
    }
    SUBCASE("dtype mismatch") {
        MaskGrid m(8, 8);
        segb::write_mask(td.path / "m.segb", m);
        CHECK_THROWS_AS(segb::read_image(td.path / "m.segb"), FormatError);
    }
}

TEST_CASE("volume files round-trip and validate") {
    TempDir td("volume");
    segb::VoxelGrid g;
    g.depth = 3;
    g.rows = 4;
    g.cols = 5;
    g.v.assign(60, 0);
    RngStream rng(2);
    for (auto& v : g.v) v = rng.bernoulli(0.5) ? 1 : 0;
    segb::write_volume(td.path / "v.segb3d", g);
    CHECK(segb::read_volume(td.path / "v.segb3d") == g);

    auto bytes = slurp(td.path / "v.segb3d");
    bytes[1] = 'X';
    spit(td.path / "v.segb3d", bytes);
    CHECK_THROWS_AS(segb::read_volume(td.path / "v.segb3d"), FormatError);
}

TEST_CASE("dataset write/load round-trip with manifest") {
    TempDir td("dataset");
    dataio::SyntheticSpec spec;
    spec.n_slices = 6;
    spec.shape = 16;
    spec.seed = 3;
    Dataset ds = dataio::generate_synthetic(spec);
    segb::write_dataset(ds, td.path / "d");
    Dataset back = segb::load_dataset(td.path / "d" / "manifest.json");
    CHECK(back.train.size() == ds.train.size());
    CHECK(back.val.size() == ds.val.size());
    CHECK(back.test.size() == ds.test.size());
    CHECK(back.normalization.mu == ds.normalization.mu);
    for (size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].image == ds.train[i].image);
        CHECK(back.train[i].target_mask == ds.train[i].target_mask);
        CHECK(back.train[i].volume_id == ds.train[i].volume_id);
    }

    SUBCASE("dataset digest is stable and content-sensitive") {
        const uint64_t d1 = segb::dataset_digest(td.path / "d" / "manifest.json");
        const uint64_t d2 = segb::dataset_digest(td.path / "d" / "manifest.json");
        CHECK(d1 == d2);
        segb::write_image(td.path / "d" / "train_0_img.segb", Image(16, 16, 0.0f));
        CHECK(segb::dataset_digest(td.path / "d" / "manifest.json") != d1);
    }
}

TEST_CASE("manifest with an empty split is rejected") {
    TempDir td("empty");
    std::ofstream out(td.path / "manifest.json");
    out << R"({"name":"x","normalization":{"mu":-500,"sigma":500},)"
        << R"("splits":{"train":[],"val":[],"test":[]}})";
    out.close();
    CHECK_THROWS_WITH_AS(segb::load_dataset(td.path / "manifest.json"),
                         doctest::Contains("empty split: train"), ValidationError);
}

TEST_CASE("manifest referencing a non-binary mask names the file") {
    TempDir td("nonbin");
    Image img(8, 8, 0.0f);
    segb::write_image(td.path / "i.segb", img);
    MaskGrid m(8, 8);
    segb::write_mask(td.path / "t.segb", m);
    // write a mask with an out-of-range value by patching bytes
    auto bytes = slurp(td.path / "t.segb");
    bytes[14] = 7;
    spit(td.path / "bad.segb", bytes);

    std::ofstream out(td.path / "manifest.json");
    out << R"({"name":"x","normalization":{"mu":-500,"sigma":500},"splits":{)"
        << R"("train":[{"image":"i.segb","target_mask":"bad.segb","volume_id":"v","slice_index":0}],)"
        << R"("val":[{"image":"i.segb","target_mask":"t.segb","volume_id":"v","slice_index":1}],)"
        << R"("test":[{"image":"i.segb","target_mask":"t.segb","volume_id":"w","slice_index":0}]}})";
    out.close();
    CHECK_THROWS_WITH_AS(segb::load_dataset(td.path / "manifest.json"),
                         doctest::Contains("bad.segb"), ValidationError);
}

TEST_CASE("duplicate (volume_id, slice_index) across train/val is rejected") {
    TempDir td("dup");
    Image img(8, 8, 0.0f);
    segb::write_image(td.path / "i.segb", img);
    MaskGrid m(8, 8);
    segb::write_mask(td.path / "t.segb", m);
    std::ofstream out(td.path / "manifest.json");
    out << R"({"name":"x","normalization":{"mu":-500,"sigma":500},"splits":{)"
        << R"("train":[{"image":"i.segb","target_mask":"t.segb","volume_id":"v","slice_index":0}],)"
        << R"("val":[{"image":"i.segb","target_mask":"t.segb","volume_id":"v","slice_index":0}],)"
        << R"("test":[{"image":"i.segb","target_mask":"t.segb","volume_id":"w","slice_index":0}]}})";
    out.close();
    CHECK_THROWS_AS(segb::load_dataset(td.path / "manifest.json"), ValidationError);
}

TEST_CASE("manifest with 80 train and 20 val entries loads with matching split sizes") {
    TempDir td("eighty");
    Image img(8, 8, 0.0f);
    segb::write_image(td.path / "i.segb", img);
    MaskGrid m(8, 8);
    m.at(3, 3) = 1;
    segb::write_mask(td.path / "t.segb", m);

    std::ofstream out(td.path / "manifest.json");
    out << R"({"name":"x","normalization":{"mu":-500,"sigma":500},"splits":{"train":[)";
    for (int i = 0; i < 80; ++i)
        out << (i ? "," : "")
            << R"({"image":"i.segb","target_mask":"t.segb","volume_id":"tr)" << i / 4
            << R"(","slice_index":)" << i % 4 << "}";
    out << R"(],"val":[)";
    for (int i = 0; i < 20; ++i)
        out << (i ? "," : "")
            << R"({"image":"i.segb","target_mask":"t.segb","volume_id":"va)" << i / 4
            << R"(","slice_index":)" << i % 4 << "}";
    out << R"(],"test":[{"image":"i.segb","target_mask":"t.segb","volume_id":"te","slice_index":0}]}})";
    out.close();

    Dataset ds = segb::load_dataset(td.path / "manifest.json");
    CHECK(ds.train.size() == 80);
    CHECK(ds.val.size() == 20);
    CHECK(ds.test.size() == 1);
}
