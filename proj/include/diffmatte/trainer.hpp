// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "diffmatte/checkpoint.hpp"
#include "diffmatte/config.hpp"
#include "diffmatte/data.hpp"
#include "diffmatte/metrics.hpp"

namespace diffmatte {

int sample_timestep(Rng& rng, const NoiseSchedule& s);  // uniform over [0, num_train_steps)

/// Mean dm_loss over samples with noise/timesteps fixed by `seed`.
double validation_dm_loss(const Denoiser& den, const std::vector<MattingSample>& samples,
                          const NoiseSchedule& s, uint64_t seed);

struct DiffusionTrainResult {
    std::string ckpt_path;
    double first_window_loss = 0.0;  // mean over the first logging window
    double last_window_loss = 0.0;
};

/// Unconditional denoiser pretraining on the dataset's alpha mattes.
DiffusionTrainResult train_diffusion(const ExperimentConfig& cfg, const std::string& data_root,
                                     const std::string& out_dir, bool resume = false);

/// Loads denoiser weights (EMA by default); refuses a config/schedule mismatch
/// against `expect` when provided.
std::unique_ptr<UNetDenoiser> load_denoiser_checkpoint(const std::string& path, bool use_ema,
                                                       const ExperimentConfig* expect);

enum class MattingVariant { full, wo_arp, wo_diffusion };
std::string variant_name(MattingVariant v);

struct MattingTrainResult {
    std::string ckpt_path;
    double best_val_sad = 0.0;
    int best_step = 0;
    double first_window_total = 0.0;
    double last_window_total = 0.0;
};

/// Sequential-refinement training against a frozen denoiser; logs per-term
/// losses and keeps the checkpoint with the best validation SAD.
MattingTrainResult train_matting(const ExperimentConfig& cfg, const std::string& data_root,
                                 const std::string& denoiser_ckpt, const std::string& out_dir,
                                 MattingVariant variant = MattingVariant::full);

/// Loaded inference bundle.
struct MattingRuntime {
    ExperimentConfig cfg;
    NoiseSchedule schedule;
    std::unique_ptr<UNetDenoiser> denoiser;
    std::unique_ptr<ImageEncoder> encoder;
    std::unique_ptr<CorrectionNet> correction;
    MattingVariant variant = MattingVariant::full;

    MattingModels models() {
        return MattingModels{denoiser.get(), encoder.get(), correction.get()};
    }
};

MattingRuntime load_matting_runtime(const std::string& denoiser_ckpt,
                                    const std::string& matting_ckpt);

/// Inference honoring the runtime's variant; inputs with dims not divisible by
/// 2^depth are reflect-padded and cropped back.
Tensor infer_matte(MattingRuntime& rt, const Tensor& image, const Trimap& trimap,
                   uint64_t noise_seed, const DebugHook& debug = {});

/// Per-sample noise seed derived from a base seed and the sample id.
uint64_t sample_noise_seed(uint64_t base, const std::string& id);

/// Runs inference over a dataset split directory, writing <id>.png mattes
/// (and per-step debug dumps when requested).
void run_inference_dir(MattingRuntime& rt, const std::string& split_dir,
                       const std::string& out_dir, uint64_t seed, bool debug);

/// Mean unknown-region SAD of the runtime over loaded samples.
double mean_unknown_sad(MattingRuntime& rt, const std::vector<MattingSample>& samples,
                        uint64_t seed_base);

/// Unknown-region SAD of the trimap used directly as the prediction.
double trimap_baseline_sad(const std::vector<MattingSample>& samples);

}  // namespace diffmatte
