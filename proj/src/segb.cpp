#include "segbench/segb.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace segbench::segb {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'G', 'B'};
constexpr uint8_t kVersion = 1;

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32le(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(out, bits);
}

class Reader {
public:
    Reader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path_);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void expect_header(uint8_t& dtype, uint32_t& rows, uint32_t& cols) {
        if (buf_.size() < 14 || std::memcmp(buf_.data(), kMagic, 4) != 0)
            throw FormatError(path_ + ": bad SEGB magic");
        if (static_cast<uint8_t>(buf_[4]) != kVersion)
            throw FormatError(path_ + ": unsupported SEGB version " +
                              std::to_string(static_cast<int>(buf_[4])));
        dtype = static_cast<uint8_t>(buf_[5]);
        rows = u32(6);
        cols = u32(10);
        pos_ = 14;
    }

    uint32_t u32(size_t at) const {
        return static_cast<uint32_t>(static_cast<uint8_t>(buf_[at])) |
               (static_cast<uint32_t>(static_cast<uint8_t>(buf_[at + 1])) << 8) |
               (static_cast<uint32_t>(static_cast<uint8_t>(buf_[at + 2])) << 16) |
               (static_cast<uint32_t>(static_cast<uint8_t>(buf_[at + 3])) << 24);
    }

    uint32_t next_u32() {
        if (pos_ + 4 > buf_.size()) throw FormatError(path_ + ": truncated header");
        uint32_t v = u32(pos_);
        pos_ += 4;
        return v;
    }

    void payload_f32(std::vector<float>& out, size_t count) {
        if (pos_ + count * 4 != buf_.size())
            throw FormatError(path_ + ": payload size mismatch (expected " +
                              std::to_string(count * 4) + " bytes)");
        out.resize(count);
        for (size_t i = 0; i < count; ++i) {
            uint32_t bits = u32(pos_ + i * 4);
            std::memcpy(&out[i], &bits, 4);
        }
    }

    void payload_u8(std::vector<uint8_t>& out, size_t count) {
        if (pos_ + count != buf_.size())
            throw FormatError(path_ + ": payload size mismatch (expected " +
                              std::to_string(count) + " bytes)");
        out.assign(buf_.begin() + static_cast<long>(pos_), buf_.end());
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::vector<char> buf_;
    size_t pos_ = 0;
};

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<long>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::string header(uint8_t dtype, uint32_t rows, uint32_t cols) {
    std::string h(kMagic, 4);
    h.push_back(static_cast<char>(kVersion));
    h.push_back(static_cast<char>(dtype));
    put_u32le(h, rows);
    put_u32le(h, cols);
    return h;
}

} // namespace

void write_image(const std::filesystem::path& path, const Image& img) {
    std::string bytes = header(kDtypeImage, static_cast<uint32_t>(img.rows),
                               static_cast<uint32_t>(img.cols));
    bytes.reserve(bytes.size() + img.size() * 4);
    for (float f : img.v) put_f32le(bytes, f);
    write_file(path, bytes);
}

void write_mask(const std::filesystem::path& path, const MaskGrid& mask) {
    std::string bytes = header(kDtypeMask, static_cast<uint32_t>(mask.rows),
                               static_cast<uint32_t>(mask.cols));
    bytes.append(reinterpret_cast<const char*>(mask.v.data()), mask.size());
    write_file(path, bytes);
}

Image read_image(const std::filesystem::path& path) {
    Reader r(path);
    uint8_t dtype;
    uint32_t rows, cols;
    r.expect_header(dtype, rows, cols);
    if (dtype != kDtypeImage)
        throw FormatError(r.path() + ": expected image dtype 0, got " + std::to_string(dtype));
    Image img(static_cast<int>(rows), static_cast<int>(cols));
    r.payload_f32(img.v, img.size());
    return img;
}

MaskGrid read_mask(const std::filesystem::path& path) {
    Reader r(path);
    uint8_t dtype;
    uint32_t rows, cols;
    r.expect_header(dtype, rows, cols);
    if (dtype != kDtypeMask)
        throw FormatError(r.path() + ": expected mask dtype 1, got " + std::to_string(dtype));
    MaskGrid m(static_cast<int>(rows), static_cast<int>(cols));
    r.payload_u8(m.v, m.size());
    for (uint8_t v : m.v)
        if (v > 1)
            throw ValidationError(r.path() + ": non-binary mask payload (value " +
                                  std::to_string(v) + ")");
    return m;
}

void write_volume(const std::filesystem::path& path, const VoxelGrid& grid) {
    std::string bytes = header(kDtypeMask, static_cast<uint32_t>(grid.rows),
                               static_cast<uint32_t>(grid.cols));
    put_u32le(bytes, static_cast<uint32_t>(grid.depth));
    bytes.append(reinterpret_cast<const char*>(grid.v.data()), grid.v.size());
    write_file(path, bytes);
}

VoxelGrid read_volume(const std::filesystem::path& path) {
    Reader r(path);
    uint8_t dtype;
    uint32_t rows, cols;
    r.expect_header(dtype, rows, cols);
    if (dtype != kDtypeMask)
        throw FormatError(r.path() + ": expected mask dtype 1 in volume, got " +
                          std::to_string(dtype));
    uint32_t depth = r.next_u32();
    if (depth == 0) throw FormatError(r.path() + ": zero-depth volume");
    VoxelGrid g;
    g.rows = static_cast<int>(rows);
    g.cols = static_cast<int>(cols);
    g.depth = static_cast<int>(depth);
    r.payload_u8(g.v, static_cast<size_t>(rows) * cols * depth);
    for (uint8_t v : g.v)
        if (v > 1) throw ValidationError(r.path() + ": non-binary voxel payload");
    return g;
}

namespace {

Slice load_slice(const nlohmann::json& entry, const std::filesystem::path& base,
                 const std::string& where) {
    Slice s;
    const std::string img_rel = entry.at("image").get<std::string>();
    s.image = read_image(base / img_rel);
    s.target_mask = read_mask(base / entry.at("target_mask").get<std::string>());
    if (entry.contains("lung_mask"))
        s.lung_mask = read_mask(base / entry.at("lung_mask").get<std::string>());
    s.volume_id = entry.at("volume_id").get<std::string>();
    s.slice_index = entry.at("slice_index").get<int>();
    s.validate(where + " (" + img_rel + ")");
    return s;
}

} // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": invalid JSON (" + e.what() + ")");
    }
    Dataset ds;
    try {
        ds.name = j.at("name").get<std::string>();
        ds.normalization.mu = j.at("normalization").at("mu").get<double>();
        ds.normalization.sigma = j.at("normalization").at("sigma").get<double>();
        const auto& splits = j.at("splits");
        const std::filesystem::path base = manifest_path.parent_path();
        auto load_split = [&](const char* split_name, std::vector<Slice>& out) {
            if (!splits.contains(split_name) || splits.at(split_name).empty())
                throw ValidationError(manifest_path.string() + ": empty split: " + split_name);
            for (const auto& entry : splits.at(split_name))
                out.push_back(load_slice(entry, base, ds.name + "/" + split_name));
        };
        load_split("train", ds.train);
        load_split("val", ds.val);
        load_split("test", ds.test);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": bad manifest schema (" + e.what() + ")");
    }
    ds.validate();
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["name"] = ds.name;
    j["normalization"] = {{"mu", ds.normalization.mu}, {"sigma", ds.normalization.sigma}};
    auto dump_split = [&](const char* split_name, const std::vector<Slice>& split) {
        nlohmann::json arr = nlohmann::json::array();
        int i = 0;
        for (const auto& s : split) {
            const std::string stem = std::string(split_name) + "_" + std::to_string(i++);
            nlohmann::json e;
            e["image"] = stem + "_img.segb";
            e["target_mask"] = stem + "_tgt.segb";
            write_image(dir / (stem + "_img.segb"), s.image);
            write_mask(dir / (stem + "_tgt.segb"), s.target_mask);
            if (s.lung_mask) {
                e["lung_mask"] = stem + "_lung.segb";
                write_mask(dir / (stem + "_lung.segb"), *s.lung_mask);
            }
            e["volume_id"] = s.volume_id;
            e["slice_index"] = s.slice_index;
            arr.push_back(e);
        }
        j["splits"][split_name] = arr;
    };
    dump_split("train", ds.train);
    dump_split("val", ds.val);
    dump_split("test", ds.test);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest under " + dir.string());
    out << j.dump(2) << "\n";
}

uint64_t file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
    return fnv1a64(buf.data(), buf.size());
}

uint64_t dataset_digest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    in >> j;
    uint64_t h = file_digest(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();
    for (const char* split : {"train", "val", "test"}) {
        if (!j.contains("splits") || !j["splits"].contains(split)) continue;
        for (const auto& e : j["splits"][split]) {
            for (const char* key : {"image", "target_mask", "lung_mask"}) {
                if (!e.contains(key)) continue;
                uint64_t fh = file_digest(base / e[key].get<std::string>());
                h = fnv1a64(&fh, sizeof fh, h);
            }
        }
    }
    return h;
}

} // namespace segbench::segb
