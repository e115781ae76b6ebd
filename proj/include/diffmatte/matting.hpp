// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "diffmatte/diffusion.hpp"
#include "diffmatte/models.hpp"
#include "diffmatte/optim.hpp"

namespace diffmatte {

/// Three-valued guidance map: 0 background, 0.5 unknown, 1 foreground.
struct Trimap {
    Tensor values;  // 1 x H x W, entries in {0.0, 0.5, 1.0}

    static Trimap from_map(Tensor values);  // validates the three levels
};

/// 1 where the trimap is known (background or foreground), 0 in the unknown band.
Tensor known_mask(const Trimap& trimap);

struct MattingSample {
    std::string id;
    Tensor image;       // 3 x H x W in [0,1]
    Tensor alpha;       // 1 x H x W in [0,1]
    Trimap trimap;
    Tensor foreground;  // 3 x H x W; may be empty when unavailable
    Tensor background;  // 3 x H x W; may be empty
    bool has_fg_bg() const { return !foreground.empty() && !background.empty(); }
};

struct LossWeights {
    double lambda_inv = 2.0;
    double lambda_alpha = 1.0;
    double lambda_comp = 1.0;
};

struct LossReport {
    double total = 0.0;
    double inv = 0.0;
    double alpha = 0.0;
    double comp = 0.0;
    bool comp_skipped = false;  // set when the sample lacks GT foreground/background
};

/// Noise the trimap to timestep T: q_sample on the model-range trimap.
Latent perturb_trimap(const Trimap& m, int T, const Tensor& noise, const NoiseSchedule& s);

/// Trimap-to-alpha with the unconditional denoiser only: perturb, then the
/// deterministic sampling chain. No correction, no reliability propagation.
Tensor sdedit_baseline(const Denoiser& model, const Trimap& m, int T, int steps,
                       const NoiseSchedule& s, const Tensor& noise);

/// m_corr*(1-known) + trimap_inv*known, exact per-pixel ownership.
Tensor apply_arp(const Tensor& m_corr, const Latent& trimap_inv_t, const Tensor& known);

/// Loss stack at one sampling step. `m_stepped` is the post-step latent,
/// supervised against the GT-alpha trajectory entry at the same timestep;
/// `alpha0_hat` is the one-step clean prediction in model range.
LossReport matting_losses(const Latent& m_stepped, const Tensor& alpha0_hat,
                          const Latent& alpha_inv_t, const MattingSample& sample,
                          const LossWeights& w);
/// Tape version returning the weighted total as a Var (terms via report_out).
Var matting_losses(Tape& tape, Var m_stepped, Var alpha0_hat, const Latent& alpha_inv_t,
                   const MattingSample& sample, const LossWeights& w, LossReport* report_out);

struct MattingModels {
    const Denoiser* denoiser = nullptr;  // frozen
    ImageEncoder* encoder = nullptr;     // trainable
    CorrectionNet* correction = nullptr; // trainable
};

/// Precomputed inversion trajectories for one sample under a frozen denoiser.
struct SampleTrajectories {
    Trajectory alpha_traj;   // GT alpha inversion (training only)
    Trajectory trimap_traj;  // trimap inversion
};
SampleTrajectories invert_sample(const Denoiser& denoiser, const MattingSample& sample,
                                 const TimePairs& pairs, const NoiseSchedule& s,
                                 bool with_alpha);

/// One training step on a single sample: builds the unrolled correction/blend/
/// DDIM graph, accumulates the loss stack over every time pair, backprops into
/// encoder+correction, and applies one optimizer update. The denoiser receives
/// no weight gradient.
LossReport train_step(const MattingSample& sample, const MattingModels& models,
                      const NoiseSchedule& s, int T, int steps, const LossWeights& w,
                      Rng& rng, Adam& optimizer);

/// Forward/backward only (no optimizer update); used for gradient
/// accumulation across a batch. Trajectories may be supplied from a cache.
/// use_arp=false drops the reliability blend (ablation path).
LossReport train_step_backward(const MattingSample& sample, const MattingModels& models,
                               const NoiseSchedule& s, int T, int steps, const LossWeights& w,
                               const Tensor& noise, const SampleTrajectories& traj,
                               bool use_arp = true);

struct StepDump {
    int step_index;
    int t_now, t_next;
    Tensor m_t;       // post-step latent (model range)
    Tensor m_corr;
    Tensor m_arp;
    Tensor alpha0;    // one-step clean prediction (model range)
};
using DebugHook = std::function<void(const StepDump&)>;

struct InferOptions {
    int T = 250;
    int steps = 5;
    uint64_t noise_seed = 0;
    bool use_arp = true;  // ablation switch
    DebugHook debug;
};

/// Full inference: trimap inversion trajectory, correction + reliability blend at every
/// step, deterministic sampling; output clamped to [0,1].
Tensor infer(const Tensor& image, const Trimap& trimap, const MattingModels& models,
             const NoiseSchedule& s, const InferOptions& opt);

}  // namespace diffmatte
