#include "segbench/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace segbench::nn {

namespace {
constexpr char kMagic[4] = {'S', 'B', 'C', 'K'};
}

void save_checkpoint_f32(const std::filesystem::path& path, const CheckpointMeta& meta,
                         const std::vector<std::pair<std::string, const Tensor4<float>*>>& entries) {
    nlohmann::json params = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& [name, t] : entries) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = {t->n, t->c, t->h, t->w};
        e["offset"] = offset;
        e["length"] = t->size() * 4;
        params.push_back(e);
        offset += t->size() * 4;
    }
    nlohmann::json header;
    header["config_hash"] = meta.config_hash;
    header["model_config"] = meta.model_config;
    header["epoch"] = meta.epoch;
    header["val_loss"] = meta.val_loss;
    header["params"] = params;

    const std::string hjson = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    const uint32_t hlen = static_cast<uint32_t>(hjson.size());
    char lenbuf[4] = {static_cast<char>(hlen & 0xff), static_cast<char>((hlen >> 8) & 0xff),
                      static_cast<char>((hlen >> 16) & 0xff),
                      static_cast<char>((hlen >> 24) & 0xff)};
    out.write(lenbuf, 4);
    out.write(hjson.data(), static_cast<long>(hjson.size()));
    for (const auto& [name, t] : entries) {
        static_assert(sizeof(float) == 4);
        for (float f : t->v) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
            out.write(b, 4);
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad checkpoint magic");
    const uint32_t hlen = static_cast<uint32_t>(static_cast<uint8_t>(buf[4])) |
                          (static_cast<uint32_t>(static_cast<uint8_t>(buf[5])) << 8) |
                          (static_cast<uint32_t>(static_cast<uint8_t>(buf[6])) << 16) |
                          (static_cast<uint32_t>(static_cast<uint8_t>(buf[7])) << 24);
    if (buf.size() < 8 + static_cast<size_t>(hlen))
        throw FormatError(path.string() + ": truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.begin() + 8, buf.begin() + 8 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": invalid checkpoint header (" + e.what() + ")");
    }

    LoadedCheckpoint ck;
    try {
        ck.meta.config_hash = header.at("config_hash").get<std::string>();
        ck.meta.model_config = header.at("model_config");
        ck.meta.epoch = header.at("epoch").get<int>();
        ck.meta.val_loss = header.at("val_loss").get<double>();
        const size_t blob_start = 8 + hlen;
        const size_t blob_size = buf.size() - blob_start;
        for (const auto& e : header.at("params")) {
            const std::string name = e.at("name").get<std::string>();
            std::array<int, 4> shape{};
            for (int i = 0; i < 4; ++i) shape[i] = e.at("shape").at(i).get<int>();
            const size_t offset = e.at("offset").get<size_t>();
            const size_t length = e.at("length").get<size_t>();
            const size_t count = static_cast<size_t>(shape[0]) * shape[1] * shape[2] * shape[3];
            if (length != count * 4 || offset + length > blob_size)
                throw FormatError(path.string() + ": blob bounds invalid for parameter '" + name +
                                  "'");
            std::vector<float> vals(count);
            for (size_t i = 0; i < count; ++i) {
                const size_t at = blob_start + offset + i * 4;
                uint32_t bits = static_cast<uint32_t>(static_cast<uint8_t>(buf[at])) |
                                (static_cast<uint32_t>(static_cast<uint8_t>(buf[at + 1])) << 8) |
                                (static_cast<uint32_t>(static_cast<uint8_t>(buf[at + 2])) << 16) |
                                (static_cast<uint32_t>(static_cast<uint8_t>(buf[at + 3])) << 24);
                std::memcpy(&vals[i], &bits, 4);
            }
            ck.names.push_back(name);
            ck.shapes.push_back(shape);
            ck.values.push_back(std::move(vals));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad checkpoint schema (" + e.what() + ")");
    }
    return ck;
}

} // namespace segbench::nn
