// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "diffmatte/data.hpp"
#include "diffmatte/matting.hpp"
#include "diffmatte/models.hpp"

namespace diffmatte {

/// Flat experiment configuration. Defaults are the chosen operating point:
/// T=250, 5 sampling steps, lambdas (2,1,1), Adam lr 1e-4.
struct ExperimentConfig {
    uint64_t seed = 7;
    int resolution = 64;

    // dataset
    std::string data_dir = "runs/data";
    int train_samples = 50;
    int test_samples = 10;
    int shapes_min = 1, shapes_max = 4;
    double softness_min = 0.5, softness_max = 2.5;
    double fg_threshold = 0.99, bg_threshold = 0.01;
    int band_radius = 3;

    // schedule
    int num_train_steps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;

    // operating point
    int T = 250;
    int steps = 5;

    // losses
    double lambda_inv = 2.0, lambda_alpha = 1.0, lambda_comp = 1.0;

    // models
    int denoiser_width = 32, denoiser_depth = 3, time_embed_dim = 128;
    bool use_attention = false;
    int encoder_features = 32, encoder_depth = 3;
    int correction_width = 32, correction_depth = 3;

    // optimization
    double lr = 1e-4;
    double ema_decay = 0.999;
    double grad_clip = 1.0;
    int batch_size = 16;
    int diffusion_steps_budget = 5000;
    int matting_steps_budget = 2000;
    int val_every = 200;
    int log_every = 50;
    int sample_dump_every = 0;  // 0 disables periodic DDPM sample dumps

    NoiseSchedule make_noise_schedule() const {
        return make_schedule(num_train_steps, beta_start, beta_end);
    }
    DenoiserConfig denoiser_config() const;
    EncoderConfig encoder_config() const;
    CorrectionConfig correction_config() const;
    SyntheticSpec synthetic_spec() const;
    TrimapSpec trimap_spec() const;
    LossWeights loss_weights() const { return {lambda_inv, lambda_alpha, lambda_comp}; }

    /// Rejects resolutions the model contracts cannot take, bad thresholds etc.
    void validate() const;
};

ExperimentConfig parse_config_file(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const ExperimentConfig& cfg);
void write_config(const std::string& path, const ExperimentConfig& cfg);

/// Config echo as a flat string map (checkpoint embedding / mismatch checks).
std::map<std::string, std::string> config_map(const ExperimentConfig& cfg);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& m);

}  // namespace diffmatte
