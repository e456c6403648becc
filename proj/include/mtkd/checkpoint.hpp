#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtkd/net.hpp"

namespace mtkd {

// Checkpoint container layout:
//   bytes 0..3   ASCII magic "MTKD"
//   byte  4      format version 0x01
//   bytes 5..8   u32 little-endian manifest length
//   manifest     UTF-8 JSON: net names, specs, array shapes and offsets
//   payload      little-endian f64 arrays, in manifest order; offsets are
//                relative to the payload start

constexpr char kCheckpointMagic[4] = {'M', 'T', 'K', 'D'};
constexpr std::uint8_t kCheckpointVersion = 0x01;

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace detail

inline void save_checkpoint(const std::map<std::string, DenseNet>& nets,
                            const std::string& path) {
    nlohmann::json manifest;
    manifest["nets"] = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, net] : nets) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["layer_sizes"] = net.spec().layer_sizes;
        std::vector<std::string> acts;
        for (Activation a : net.spec().activations) acts.push_back(activation_name(a));
        entry["activations"] = acts;
        entry["init_seed"] = net.spec().init_seed;
        entry["arrays"] = nlohmann::json::array();
        for (const auto& layer : net.layers()) {
            for (const Matrix2D* m : {&layer.weights.value, &layer.bias.value}) {
                nlohmann::json arr;
                arr["rows"] = m->rows;
                arr["cols"] = m->cols;
                arr["offset"] = payload.size();
                entry["arrays"].push_back(arr);
                for (double v : m->data) detail::put_f64_le(payload, v);
            }
        }
        manifest["nets"].push_back(entry);
    }
    std::string mstr = manifest.dump();

    std::string out;
    out.append(kCheckpointMagic, 4);
    out.push_back(static_cast<char>(kCheckpointVersion));
    detail::put_u32_le(out, static_cast<std::uint32_t>(mstr.size()));
    out += mstr;
    out += payload;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("save_checkpoint: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("save_checkpoint: short write to " + path);
}

inline std::map<std::string, DenseNet> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_checkpoint: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 9) throw FormatError("load_checkpoint: truncated header", buf.size());
    if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
        throw FormatError("load_checkpoint: bad magic", 0);
    if (buf[4] != kCheckpointVersion)
        throw FormatError("load_checkpoint: unsupported format version " +
                              std::to_string(buf[4]),
                          4);
    std::uint32_t mlen = 0;
    for (int i = 0; i < 4; ++i) mlen |= static_cast<std::uint32_t>(buf[5 + i]) << (8 * i);
    if (buf.size() < 9 + static_cast<std::size_t>(mlen))
        throw FormatError("load_checkpoint: truncated manifest", buf.size());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(buf.begin() + 9, buf.begin() + 9 + mlen);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("load_checkpoint: manifest parse error: ") +
                              e.what(),
                          9);
    }
    const std::size_t payload_start = 9 + mlen;

    std::map<std::string, DenseNet> nets;
    for (const auto& entry : manifest.at("nets")) {
        std::string name = entry.at("name").get<std::string>();
        if (nets.count(name))
            throw FormatError("load_checkpoint: duplicate net name " + name, 9);
        NetSpec spec;
        spec.layer_sizes = entry.at("layer_sizes").get<std::vector<std::size_t>>();
        for (const auto& a : entry.at("activations"))
            spec.activations.push_back(activation_from_name(a.get<std::string>()));
        spec.init_seed = entry.at("init_seed").get<std::uint64_t>();
        DenseNet net(spec);
        std::size_t arr_idx = 0;
        for (auto& layer : net.layers()) {
            for (Matrix2D* m : {&layer.weights.value, &layer.bias.value}) {
                const auto& arr = entry.at("arrays").at(arr_idx++);
                if (arr.at("rows").get<std::size_t>() != m->rows ||
                    arr.at("cols").get<std::size_t>() != m->cols)
                    throw FormatError("load_checkpoint: array shape mismatch for " + name,
                                      9);
                std::size_t off = payload_start + arr.at("offset").get<std::size_t>();
                std::size_t bytes = m->data.size() * 8;
                if (off + bytes > buf.size())
                    throw FormatError("load_checkpoint: truncated payload for " + name,
                                      static_cast<long long>(buf.size()));
                for (std::size_t i = 0; i < m->data.size(); ++i)
                    m->data[i] = detail::get_f64_le(&buf[off + i * 8]);
            }
        }
        nets.emplace(std::move(name), std::move(net));
    }
    return nets;
}

}  // namespace mtkd
