// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffmatte/trainer.hpp"

namespace diffmatte {

struct AblationRow {
    std::string variant;
    double mse = 0.0, sad = 0.0, grad = 0.0, conn = 0.0;
    int forward_passes = 0;  // network evaluations per sample at inference
};

struct AblationReport {
    std::vector<AblationRow> rows;
    // seed-stability grid: per training seed, MSE mean/std across inference seeds
    struct SeedGridRow {
        uint64_t train_seed;
        double mse_mean, mse_std;
    };
    std::vector<SeedGridRow> seed_grid;
};

/// Named ablation variants. "full" must be included for reference rows.
std::vector<std::string> ablation_variant_names();
bool is_known_variant(const std::string& name);

/// Trains and evaluates one variant at the config's budgets against a shared
/// pretrained denoiser; returns the unknown-region test metrics.
AblationRow run_ablation_variant(const ExperimentConfig& base, const std::string& data_root,
                                 const std::string& denoiser_ckpt, const std::string& work_dir,
                                 const std::string& variant);

/// Seed-stability study: `train_seeds` models, each evaluated with
/// `infer_seeds` inference noise seeds.
std::vector<AblationReport::SeedGridRow> run_seed_grid(const ExperimentConfig& base,
                                                       const std::string& data_root,
                                                       const std::string& denoiser_ckpt,
                                                       const std::string& work_dir,
                                                       int train_seeds, int infer_seeds);

/// Full harness over the selected variants ("" means all).
AblationReport run_ablation(const ExperimentConfig& base, const std::string& data_root,
                            const std::string& denoiser_ckpt, const std::string& work_dir,
                            const std::string& only_variant);

std::string format_ablation(const AblationReport& report);

/// Network evaluations per sample for a sampling run with `steps` pairs:
/// encoder + per-step (correction + denoiser) + inversion denoiser calls.
int forward_pass_count(MattingVariant variant, int steps);

}  // namespace diffmatte
