// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace diffmatte {

using nlohmann::json;

static constexpr char kMagic[8] = {'D', 'M', 'C', 'K', 'P', 'T', '0', '1'};

const Tensor& Checkpoint::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
    return it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["format"] = "dmckpt";
    header["version"] = 1;
    header["kind"] = ckpt.kind;
    header["config"] = ckpt.config;
    header["meta"] = ckpt.meta;
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        dir.push_back({{"name", name},
                       {"c", t.c},
                       {"h", t.h},
                       {"w", t.w},
                       {"offset", offset}});
        offset += static_cast<uint64_t>(t.size()) * sizeof(float);
    }
    header["tensors"] = dir;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : ckpt.tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file (bad format tag): " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);
    if (header.value("version", 0) != 1)
        throw std::runtime_error("unsupported checkpoint version in " + path);

    Checkpoint ckpt;
    ckpt.kind = header.value("kind", "");
    if (header.contains("config"))
        ckpt.config = header["config"].get<std::map<std::string, std::string>>();
    if (header.contains("meta"))
        ckpt.meta = header["meta"].get<std::map<std::string, int64_t>>();
    for (const auto& e : header["tensors"]) {
        Tensor t(e["c"].get<int>(), e["h"].get<int>(), e["w"].get<int>());
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!f) throw std::runtime_error("truncated checkpoint: " + path);
        ckpt.tensors[e["name"].get<std::string>()] = std::move(t);
    }
    return ckpt;
}

}  // namespace diffmatte
