// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffmatte/diffusion.hpp"
#include "diffmatte/nn.hpp"

namespace diffmatte {

struct DenoiserConfig {
    int in_channels = 1;
    int base_width = 32;
    int depth = 3;
    int time_embed_dim = 128;
    bool use_attention = false;  // attention blocks are removed; true is rejected
};

struct EncoderConfig {
    int in_channels = 3;
    int feature_channels = 32;
    int depth = 3;
};

struct CorrectionConfig {
    int feature_channels = 32;  // input is cat(f_I, m_t): feature_channels + 1
    int base_width = 32;
    int depth = 3;
    int time_embed_dim = 128;
};

/// Unconditional alpha-matte noise predictor (attention-free U-Net).
class UNetDenoiser : public Denoiser, public Module {
public:
    UNetDenoiser(const DenoiserConfig& cfg, Rng& rng);

    Var forward(Tape& tape, Var latent, int t) const override;
    std::string snapshot_id() const override;

    void collect(std::vector<Parameter*>& out) override { net_.collect(out); }
    const DenoiserConfig& config() const { return cfg_; }
    UNet& net() { return net_; }

private:
    DenoiserConfig cfg_;
    mutable UNet net_;  // tape aliases parameter storage; weights stay frozen
                        // whenever callers wrap the call in a FreezeScope
};

/// Image encoder: full-resolution feature map f_I, same spatial size as input.
class ImageEncoder : public Module {
public:
    ImageEncoder(const EncoderConfig& cfg, Rng& rng);
    Var forward(Tape& tape, Var image) const;
    Tensor encode(const Tensor& image) const;  // no-grad convenience
    void collect(std::vector<Parameter*>& out) override { net_.collect(out); }
    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    mutable UNet net_;
};

/// Time-conditioned correction module over cat(f_I, m_t); output conv is
/// zero-initialized so training starts as a pass-through of the DDIM path.
class CorrectionNet : public Module {
public:
    CorrectionNet(const CorrectionConfig& cfg, Rng& rng);
    Var forward(Tape& tape, Var features, Var m_t, int t) const;
    Tensor correct(const Tensor& features, const Tensor& m_t, int t) const;
    void collect(std::vector<Parameter*>& out) override { net_.collect(out); }
    const CorrectionConfig& config() const { return cfg_; }

private:
    CorrectionConfig cfg_;
    mutable UNet net_;
};

/// Content hash of a parameter set (weight snapshot identifier).
std::string weights_fingerprint(std::vector<Parameter*> params);

}  // namespace diffmatte
