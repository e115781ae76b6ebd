// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/models.hpp"

#include <cstring>

namespace diffmatte {

namespace {
UNetConfig denoiser_unet_config(const DenoiserConfig& c) {
    if (c.use_attention)
        throw std::invalid_argument("attention blocks are not supported (removed by design)");
    UNetConfig u;
    u.in_channels = c.in_channels;
    u.out_channels = c.in_channels;
    u.base_width = c.base_width;
    u.depth = c.depth;
    u.time_embed_dim = c.time_embed_dim;
    return u;
}
}  // namespace

UNetDenoiser::UNetDenoiser(const DenoiserConfig& cfg, Rng& rng)
    : cfg_(cfg), net_("denoiser", denoiser_unet_config(cfg), rng) {}

Var UNetDenoiser::forward(Tape& tape, Var latent, int t) const {
    return net_.forward(tape, latent, t);
}

std::string UNetDenoiser::snapshot_id() const { return weights_fingerprint(net_.parameters()); }

ImageEncoder::ImageEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    UNetConfig u;
    u.in_channels = cfg.in_channels;
    u.out_channels = cfg.feature_channels;
    u.base_width = cfg.feature_channels;
    u.depth = cfg.depth;
    u.time_embed_dim = 0;
    net_ = UNet("encoder", u, rng);
}

Var ImageEncoder::forward(Tape& tape, Var image) const { return net_.forward(tape, image); }

Tensor ImageEncoder::encode(const Tensor& image) const {
    Tape tape(false);
    return tape.value(forward(tape, tape.constant(image)));
}

CorrectionNet::CorrectionNet(const CorrectionConfig& cfg, Rng& rng) : cfg_(cfg) {
    UNetConfig u;
    u.in_channels = cfg.feature_channels + 1;
    u.out_channels = 1;
    u.base_width = cfg.base_width;
    u.depth = cfg.depth;
    u.time_embed_dim = cfg.time_embed_dim;
    u.zero_init_out = true;
    net_ = UNet("correction", u, rng);
}

Var CorrectionNet::forward(Tape& tape, Var features, Var m_t, int t) const {
    if (tape.value(features).h != tape.value(m_t).h ||
        tape.value(features).w != tape.value(m_t).w)
        throw std::invalid_argument("correction: feature/latent spatial mismatch");
    // residual over the incoming latent: with the zero-initialized output conv
    // the module starts as an identity pass-through of the sampling path
    Var delta = net_.forward(tape, tape.concat_channels(features, m_t), t);
    return tape.add(m_t, delta);
}

Tensor CorrectionNet::correct(const Tensor& features, const Tensor& m_t, int t) const {
    Tape tape(false);
    return tape.value(forward(tape, tape.constant(features), tape.constant(m_t), t));
}

std::string weights_fingerprint(std::vector<Parameter*> params) {
    // FNV-1a over raw parameter bytes, order given by the module tree
    uint64_t h = 1469598103934665603ULL;
    for (const auto* p : params) {
        for (float f : p->value.v) {
            uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            for (int k = 0; k < 4; k++) {
                h ^= (bits >> (8 * k)) & 0xFF;
                h *= 1099511628211ULL;
            }
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace diffmatte
