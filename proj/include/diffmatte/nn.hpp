// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "diffmatte/graph.hpp"
#include "diffmatte/tensor.hpp"

namespace diffmatte {

struct Module {
    virtual ~Module() = default;
    virtual void collect(std::vector<Parameter*>& out) = 0;
    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        collect(out);
        return out;
    }
    size_t parameter_count() {
        size_t n = 0;
        for (auto* p : parameters()) n += p->value.size();
        return n;
    }
};

struct Conv2dLayer : Module {
    Parameter w, b;  // w: (out_c, in_c*k, k)
    int stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int in_c, int out_c, int k, int stride, int pad,
                Rng& rng, bool zero_init = false);
    Var forward(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out) override {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct LinearLayer : Module {
    Parameter w, b;  // w: (out, in, 1)

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in, int out, Rng& rng);
    Var forward(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out) override {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct GroupNormLayer : Module {
    Parameter gamma, beta;
    int groups = 1;

    GroupNormLayer() = default;
    GroupNormLayer(const std::string& name, int channels);
    Var forward(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out) override {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

/// Sinusoidal timestep embedding followed by a two-layer MLP.
struct TimeEmbedding : Module {
    int dim = 0;
    LinearLayer fc1, fc2;

    TimeEmbedding() = default;
    TimeEmbedding(const std::string& name, int dim, Rng& rng);
    Var forward(Tape& t, int timestep);
    static Tensor sinusoid(int timestep, int dim);
    void collect(std::vector<Parameter*>& out) override {
        fc1.collect(out);
        fc2.collect(out);
    }
};

/// GN -> SiLU -> conv -> (+time proj) -> GN -> SiLU -> conv, with residual
/// skip (1x1 conv when channel counts differ).
struct ResBlock : Module {
    GroupNormLayer gn1, gn2;
    Conv2dLayer conv1, conv2;
    std::unique_ptr<Conv2dLayer> skip;       // null when in_c == out_c
    std::unique_ptr<LinearLayer> time_proj;  // null when not time-conditioned

    ResBlock() = default;
    ResBlock(const std::string& name, int in_c, int out_c, int time_dim, Rng& rng);
    Var forward(Tape& t, Var x, Var time_emb);  // time_emb may be invalid
    void collect(std::vector<Parameter*>& out) override;
};

struct UNetConfig {
    int in_channels = 1;
    int out_channels = 1;
    int base_width = 32;
    int depth = 3;           // number of resolution levels
    int time_embed_dim = 0;  // 0 disables time conditioning
    bool zero_init_out = false;
};

/// Plain encoder-decoder with skip connections; attention-free by
/// construction. Spatial dims must be divisible by 2^depth.
struct UNet : Module {
    UNetConfig cfg;
    std::unique_ptr<TimeEmbedding> time_embed;
    Conv2dLayer in_conv;
    std::vector<ResBlock> down_blocks;
    std::vector<Conv2dLayer> down_convs;  // stride-2, between levels
    ResBlock mid1, mid2;
    std::vector<Conv2dLayer> up_convs;    // post-upsample 3x3
    std::vector<ResBlock> up_blocks;
    GroupNormLayer out_norm;
    Conv2dLayer out_conv;

    UNet() = default;
    UNet(const std::string& name, const UNetConfig& cfg, Rng& rng);
    Var forward(Tape& t, Var x, int timestep = 0);
    void collect(std::vector<Parameter*>& out) override;
    int level_channels(int level) const { return cfg.base_width << std::min(level, 3); }
};

int group_count_for(int channels);

}  // namespace diffmatte
