#ifndef LONGATTN_SAFETENSORS_HPP
#define LONGATTN_SAFETENSORS_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "longattn/common.hpp"

namespace longattn {

// Single-file tensor container in the safetensors layout:
//   u64 LE header length N, then N bytes of JSON, then raw tensor data.
// Each JSON entry: name -> {"dtype", "shape", "data_offsets": [begin, end)}
// with offsets relative to the start of the data section.

struct TensorInfo {
    std::string dtype;
    std::vector<uint64_t> shape;
    uint64_t begin = 0;
    uint64_t end = 0;

    uint64_t element_count() const {
        uint64_t n = 1;
        for (uint64_t d : shape) n *= d;
        return n;
    }
};

class SafetensorsFile {
public:
    explicit SafetensorsFile(const std::filesystem::path& path) : path_(path) {
        in_.open(path, std::ios::binary);
        if (!in_) throw ModelError("cannot open weight container: " + path.string());
        unsigned char len_buf[8];
        in_.read(reinterpret_cast<char*>(len_buf), 8);
        if (in_.gcount() != 8)
            throw ModelError("weight container too short for header: " + path.string());
        const uint64_t header_len = get_u64le(len_buf);
        if (header_len > (1ull << 30))
            throw ModelError("implausible header length in " + path.string());
        std::string header(header_len, '\0');
        in_.read(header.data(), static_cast<std::streamsize>(header_len));
        if (in_.gcount() != static_cast<std::streamsize>(header_len))
            throw ModelError("truncated header in " + path.string());
        data_offset_ = 8 + header_len;

        nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ModelError("malformed JSON header in " + path.string());
        for (const auto& [name, info] : j.items()) {
            if (name == "__metadata__") continue;
            TensorInfo t;
            t.dtype = info.at("dtype").get<std::string>();
            t.shape = info.at("shape").get<std::vector<uint64_t>>();
            t.begin = info.at("data_offsets").at(0).get<uint64_t>();
            t.end = info.at("data_offsets").at(1).get<uint64_t>();
            tensors_[name] = std::move(t);
        }
    }

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

    const TensorInfo& info(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end())
            throw ModelError("tensor '" + name + "' missing from " + path_.string());
        return it->second;
    }

    std::vector<uint8_t> read_raw(const std::string& name) {
        const TensorInfo& t = info(name);
        if (t.end < t.begin) throw ModelError("bad data_offsets for tensor '" + name + "'");
        std::vector<uint8_t> bytes(t.end - t.begin);
        in_.seekg(static_cast<std::streamoff>(data_offset_ + t.begin));
        in_.read(reinterpret_cast<char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        if (in_.gcount() != static_cast<std::streamsize>(bytes.size()))
            throw ModelError("short read for tensor '" + name + "' in " + path_.string());
        return bytes;
    }

    /// Reads a tensor as f32, converting from F32, F16 or BF16 storage.
    std::vector<float> read_f32(const std::string& name) {
        const TensorInfo& t = info(name);
        const std::vector<uint8_t> bytes = read_raw(name);
        const uint64_t n = t.element_count();
        std::vector<float> out(n);
        if (t.dtype == "F32") {
            if (bytes.size() != n * 4)
                throw ModelError("tensor '" + name + "' byte count does not match its shape");
            std::memcpy(out.data(), bytes.data(), bytes.size());
        } else if (t.dtype == "F16") {
            if (bytes.size() != n * 2)
                throw ModelError("tensor '" + name + "' byte count does not match its shape");
            for (uint64_t i = 0; i < n; ++i)
                out[i] = f16_to_f32(static_cast<uint16_t>(bytes[2 * i] | bytes[2 * i + 1] << 8));
        } else if (t.dtype == "BF16") {
            if (bytes.size() != n * 2)
                throw ModelError("tensor '" + name + "' byte count does not match its shape");
            for (uint64_t i = 0; i < n; ++i) {
                const uint32_t hi = static_cast<uint32_t>(bytes[2 * i] | bytes[2 * i + 1] << 8);
                const uint32_t w = hi << 16;
                float f;
                std::memcpy(&f, &w, 4);
                out[i] = f;
            }
        } else {
            throw ModelError("tensor '" + name + "' has unsupported dtype " + t.dtype +
                             " (supported: F32, F16, BF16)");
        }
        return out;
    }

    const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }

private:
    static float f16_to_f32(uint16_t h) {
        const uint32_t sign = (h & 0x8000u) << 16;
        const uint32_t exp = (h >> 10) & 0x1f;
        const uint32_t mant = h & 0x3ff;
        uint32_t w;
        if (exp == 0) {
            if (mant == 0) {
                w = sign;
            } else {
                // subnormal: renormalize
                int e = -1;
                uint32_t m = mant;
                do {
                    ++e;
                    m <<= 1;
                } while ((m & 0x400) == 0);
                w = sign | static_cast<uint32_t>(127 - 15 - e) << 23 | (m & 0x3ff) << 13;
            }
        } else if (exp == 0x1f) {
            w = sign | 0x7f800000u | mant << 13;
        } else {
            w = sign | (exp - 15 + 127) << 23 | mant << 13;
        }
        float f;
        std::memcpy(&f, &w, 4);
        return f;
    }

    std::filesystem::path path_;
    std::ifstream in_;
    uint64_t data_offset_ = 0;
    std::map<std::string, TensorInfo> tensors_;
};

/// Writes an F32 container; used for fixtures and synthesized models.
/// Tensors are laid out in the given order.
inline void write_safetensors(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string,
                                std::pair<std::vector<uint64_t>, std::vector<float>>>>& tensors) {
    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    uint64_t offset = 0;
    for (const auto& [name, payload] : tensors) {
        const auto& [shape, data] = payload;
        uint64_t n = 1;
        for (uint64_t d : shape) n *= d;
        if (n != data.size())
            throw ModelError("tensor '" + name + "' shape does not match its data size");
        const uint64_t bytes = n * 4;
        header[name] = {{"dtype", "F32"},
                        {"shape", shape},
                        {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot open weight container for writing: " + path.string());
    std::vector<unsigned char> len;
    put_u64le(len, header_str.size());
    out.write(reinterpret_cast<const char*>(len.data()), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, payload] : tensors) {
        (void)name;
        const auto& data = payload.second;
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * 4));
    }
    if (!out) throw ModelError("write failure on " + path.string());
}

}  // namespace longattn

#endif  // LONGATTN_SAFETENSORS_HPP
