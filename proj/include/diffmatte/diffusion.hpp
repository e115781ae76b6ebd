// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "diffmatte/graph.hpp"
#include "diffmatte/schedule.hpp"
#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// Single-channel map at a diffusion timestep.
struct Latent {
    Tensor values;  // 1 x H x W
    int timestep = 0;
};

enum class TrajectorySource { alpha_inversion, trimap_inversion };

/// Deterministic inversion trajectory: timestep -> latent, keys matching a
/// TimePairs timestep set, entries[0] being the clean input.
struct Trajectory {
    std::map<int, Latent> entries;
    TrajectorySource source_kind = TrajectorySource::alpha_inversion;

    const Latent& at(int t) const;
};

/// Noise-prediction model contract: deterministic per weight snapshot,
/// output shaped like the input. Implementations route through a tape so the
/// training graph can differentiate through a frozen denoiser's input.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Var forward(Tape& tape, Var latent, int t) const = 0;
    virtual std::string snapshot_id() const = 0;

    /// Convenience wrapper: plain forward with no gradient bookkeeping.
    Tensor predict_noise(const Tensor& latent, int t) const;
};

// Maps in [0,1] are remapped to [-1,1] before entering diffusion space and
// back after sampling, clamped to [0,1] on final outputs.
Tensor to_model_range(const Tensor& x01);
Tensor from_model_range(const Tensor& xm);
Tensor clamp01(const Tensor& x);
Var to_model_range(Tape& t, Var x01);
Var from_model_range(Tape& t, Var xm);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise. Inputs are in
/// model range; noise supplied explicitly for determinism.
Latent q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& s);
Var q_sample(Tape& tape, Var x0, int t, const Tensor& noise, const NoiseSchedule& s);

/// Mean squared error between the supplied noise and the model prediction on
/// the q_sample output.
double dm_loss(const Denoiser& model, const Tensor& x0, int t, const Tensor& noise,
               const NoiseSchedule& s);
Var dm_loss(Tape& tape, const Denoiser& model, Var x0_const, int t, const Tensor& noise,
            const NoiseSchedule& s);

/// Stochastic reverse step; sigma_t = sqrt(beta_t); z must be zero at t == 1
/// by convention (caller supplied).
Latent ddpm_step(const Denoiser& model, const Latent& x_t, const Tensor& z,
                 const NoiseSchedule& s);

struct DdimResult {
    Latent next;     // latent at t_next
    Tensor x0_hat;   // one-step clean prediction
};
/// Deterministic (eta = 0) reverse update from t_now to t_next; also returns
/// the one-step clean prediction.
DdimResult ddim_step(const Denoiser& model, const Latent& x_t, int t_now, int t_next,
                     const NoiseSchedule& s);
struct DdimVars {
    Var next;
    Var x0_hat;
};
DdimVars ddim_step(Tape& tape, const Denoiser& model, Var x_t, int t_now, int t_next,
                   const NoiseSchedule& s);

/// DDIM inversion: runs the update in reverse time order (0 -> T) with the
/// noise prediction evaluated at the current, lower timestep. Trajectory is
/// keyed by every timestep in `timepairs`; entries[0] = x0.
Trajectory ddim_invert(const Denoiser& model, const Tensor& x0, const TimePairs& timepairs,
                       const NoiseSchedule& s, TrajectorySource kind);

}  // namespace diffmatte
