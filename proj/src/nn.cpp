// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmatte {

int group_count_for(int channels) { return std::gcd(8, channels); }

Conv2dLayer::Conv2dLayer(const std::string& name, int in_c, int out_c, int k, int stride_,
                         int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    Tensor wt(out_c, in_c * k, k);
    if (!zero_init) {
        const double scale = std::sqrt(1.0 / (in_c * k * k));
        for (auto& x : wt.v) x = static_cast<float>(rng.normal() * scale);
    }
    w = Parameter(name + ".w", std::move(wt));
    b = Parameter(name + ".b", Tensor(out_c, 1, 1));
}

Var Conv2dLayer::forward(Tape& t, Var x) {
    return t.conv2d(x, t.param(w), t.param(b), stride, pad);
}

LinearLayer::LinearLayer(const std::string& name, int in, int out, Rng& rng) {
    Tensor wt(out, in, 1);
    const double scale = std::sqrt(1.0 / in);
    for (auto& x : wt.v) x = static_cast<float>(rng.normal() * scale);
    w = Parameter(name + ".w", std::move(wt));
    b = Parameter(name + ".b", Tensor(out, 1, 1));
}

Var LinearLayer::forward(Tape& t, Var x) { return t.linear(x, t.param(w), t.param(b)); }

GroupNormLayer::GroupNormLayer(const std::string& name, int channels)
    : groups(group_count_for(channels)) {
    gamma = Parameter(name + ".gamma", Tensor::full(channels, 1, 1, 1.0f));
    beta = Parameter(name + ".beta", Tensor(channels, 1, 1));
}

Var GroupNormLayer::forward(Tape& t, Var x) {
    return t.group_norm(x, t.param(gamma), t.param(beta), groups);
}

TimeEmbedding::TimeEmbedding(const std::string& name, int dim_, Rng& rng)
    : dim(dim_), fc1(name + ".fc1", dim_, dim_, rng), fc2(name + ".fc2", dim_, dim_, rng) {
    if (dim_ % 2 != 0) throw std::invalid_argument("time embedding dim must be even");
}

Tensor TimeEmbedding::sinusoid(int timestep, int dim) {
    Tensor e(dim, 1, 1);
    const int half = dim / 2;
    for (int i = 0; i < half; i++) {
        const double freq = std::exp(-std::log(10000.0) * i / (half - 1.0));
        e.v[i] = static_cast<float>(std::sin(timestep * freq));
        e.v[half + i] = static_cast<float>(std::cos(timestep * freq));
    }
    return e;
}

Var TimeEmbedding::forward(Tape& t, int timestep) {
    Var e = t.constant(sinusoid(timestep, dim));
    return fc2.forward(t, t.silu(fc1.forward(t, e)));
}

ResBlock::ResBlock(const std::string& name, int in_c, int out_c, int time_dim, Rng& rng)
    : gn1(name + ".gn1", in_c),
      gn2(name + ".gn2", out_c),
      conv1(name + ".conv1", in_c, out_c, 3, 1, 1, rng),
      conv2(name + ".conv2", out_c, out_c, 3, 1, 1, rng) {
    if (in_c != out_c)
        skip = std::make_unique<Conv2dLayer>(name + ".skip", in_c, out_c, 1, 1, 0, rng);
    if (time_dim > 0)
        time_proj = std::make_unique<LinearLayer>(name + ".time", time_dim, out_c, rng);
}

Var ResBlock::forward(Tape& t, Var x, Var time_emb) {
    Var h = conv1.forward(t, t.silu(gn1.forward(t, x)));
    if (time_proj) {
        if (!time_emb.valid())
            throw std::logic_error("time-conditioned ResBlock called without embedding");
        Var proj = time_proj->forward(t, t.silu(time_emb));
        h = t.add_channel_bias(h, proj);
    }
    h = conv2.forward(t, t.silu(gn2.forward(t, h)));
    Var res = skip ? skip->forward(t, x) : x;
    return t.add(h, res);
}

void ResBlock::collect(std::vector<Parameter*>& out) {
    gn1.collect(out);
    gn2.collect(out);
    conv1.collect(out);
    conv2.collect(out);
    if (skip) skip->collect(out);
    if (time_proj) time_proj->collect(out);
}

UNet::UNet(const std::string& name, const UNetConfig& c, Rng& rng) : cfg(c) {
    if (cfg.depth < 1) throw std::invalid_argument("UNet depth must be >= 1");
    if (cfg.time_embed_dim > 0)
        time_embed = std::make_unique<TimeEmbedding>(name + ".temb", cfg.time_embed_dim, rng);
    const int td = cfg.time_embed_dim;
    in_conv = Conv2dLayer(name + ".in", cfg.in_channels, level_channels(0), 3, 1, 1, rng);
    for (int l = 0; l < cfg.depth; l++) {
        down_blocks.emplace_back(name + ".down" + std::to_string(l), level_channels(l),
                                 level_channels(l), td, rng);
        if (l + 1 < cfg.depth)
            down_convs.emplace_back(name + ".dconv" + std::to_string(l), level_channels(l),
                                    level_channels(l + 1), 3, 2, 1, rng);
    }
    const int bottom = level_channels(cfg.depth - 1);
    mid1 = ResBlock(name + ".mid1", bottom, bottom, td, rng);
    mid2 = ResBlock(name + ".mid2", bottom, bottom, td, rng);
    for (int l = cfg.depth - 1; l >= 1; l--) {
        up_convs.emplace_back(name + ".uconv" + std::to_string(l), level_channels(l),
                              level_channels(l - 1), 3, 1, 1, rng);
        up_blocks.emplace_back(name + ".up" + std::to_string(l), 2 * level_channels(l - 1),
                               level_channels(l - 1), td, rng);
    }
    out_norm = GroupNormLayer(name + ".onorm", level_channels(0));
    out_conv = Conv2dLayer(name + ".out", level_channels(0), cfg.out_channels, 3, 1, 1, rng,
                           cfg.zero_init_out);
}

Var UNet::forward(Tape& t, Var x, int timestep) {
    const Tensor& xt = t.value(x);
    const int div = 1 << cfg.depth;
    if (xt.h % div != 0 || xt.w % div != 0)
        throw std::invalid_argument("UNet: spatial dims " + xt.shape_str() +
                                    " not divisible by 2^depth = " + std::to_string(div));
    if (xt.c != cfg.in_channels)
        throw std::invalid_argument("UNet: expected " + std::to_string(cfg.in_channels) +
                                    " input channels, got " + std::to_string(xt.c));
    Var temb{};
    if (time_embed) temb = time_embed->forward(t, timestep);

    Var h = in_conv.forward(t, x);
    std::vector<Var> skips;
    for (int l = 0; l < cfg.depth; l++) {
        h = down_blocks[l].forward(t, h, temb);
        skips.push_back(h);
        if (l + 1 < cfg.depth) h = down_convs[l].forward(t, h);
    }
    h = mid1.forward(t, h, temb);
    h = mid2.forward(t, h, temb);
    for (size_t i = 0; i < up_blocks.size(); i++) {
        const int level = cfg.depth - 1 - static_cast<int>(i);
        h = up_convs[i].forward(t, t.upsample_nearest2x(h));
        h = t.concat_channels(h, skips[level - 1]);
        h = up_blocks[i].forward(t, h, temb);
    }
    return out_conv.forward(t, t.silu(out_norm.forward(t, h)));
}

void UNet::collect(std::vector<Parameter*>& out) {
    if (time_embed) time_embed->collect(out);
    in_conv.collect(out);
    for (auto& b : down_blocks) b.collect(out);
    for (auto& c : down_convs) c.collect(out);
    mid1.collect(out);
    mid2.collect(out);
    for (auto& c : up_convs) c.collect(out);
    for (auto& b : up_blocks) b.collect(out);
    out_norm.collect(out);
    out_conv.collect(out);
}

}  // namespace diffmatte
