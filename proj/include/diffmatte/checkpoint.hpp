// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// Single-file archive: format tag, JSON header (kind, config echo, tensor
/// directory, scalar metadata), then raw little-endian float32 blobs.
/// Bit-identical round trip.
struct Checkpoint {
    std::string kind;                       // "denoiser" | "matting"
    std::map<std::string, std::string> config;  // flat config echo
    std::map<std::string, Tensor> tensors;
    std::map<std::string, int64_t> meta;    // e.g. optimizer step counts

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diffmatte
