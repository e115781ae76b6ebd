// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "diffmatte/matting.hpp"
#include "diffmatte/tensor.hpp"

namespace diffmatte {

struct SyntheticSpec {
    int height = 64, width = 64;
    int shapes_min = 1, shapes_max = 4;
    double softness_min = 0.5, softness_max = 2.5;  // edge-blur sigma range, px
    double semi_transparent_prob = 0.35;            // chance a shape gets an alpha plateau
    uint64_t seed = 0;
};

struct TrimapSpec {
    double fg_threshold = 0.99;
    double bg_threshold = 0.01;
    int band_radius = 3;
};

/// Union of soft-edged primitives (disks, capsules, blob clusters); values in
/// [0,1], snapped to the 16-bit grid so file round trips are exact.
Tensor gen_alpha(const SyntheticSpec& spec, Rng& rng);

/// I = alpha * F + (1 - alpha) * B, exact.
Tensor composite(const Tensor& alpha, const Tensor& foreground, const Tensor& background);

/// Threshold then dilate the unknown band with a square structuring element.
Trimap alpha_to_trimap(const Tensor& alpha, const TrimapSpec& spec);

/// Procedural textures (gradient + smooth noise), snapped to the 8-bit grid.
Tensor gen_texture(int height, int width, Rng& rng);

MattingSample make_sample(const std::string& id, const SyntheticSpec& spec,
                          const TrimapSpec& tspec, Rng& rng);

/// Crop all fields with one window; windows are re-drawn (up to 10 tries) until
/// they contain an unknown pixel, then centered on one as a fallback.
MattingSample random_crop(const MattingSample& sample, int size, Rng& rng);

// Directory layout: <root>/{train,test}/<id>/{image.png,alpha.png,trimap.png,fg.png,bg.png}
// with a `manifest` file listing ids and the generator seed.
void save_sample(const std::string& dir, const MattingSample& sample);
MattingSample load_sample(const std::string& dir, const std::string& id);
void save_matte(const std::string& path, const Tensor& alpha);
Tensor load_matte(const std::string& path);

struct DatasetIndex {
    uint64_t seed = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};
void write_manifest(const std::string& root, const DatasetIndex& index);
DatasetIndex read_manifest(const std::string& root);

std::vector<MattingSample> load_split(const std::string& root, const std::string& split);

/// Generates the full train/test layout; deterministic per seed.
DatasetIndex generate_dataset(const std::string& root, const SyntheticSpec& spec,
                              const TrimapSpec& tspec, int train_count, int test_count);

}  // namespace diffmatte
