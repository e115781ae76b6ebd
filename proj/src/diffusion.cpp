// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffmatte {

const Latent& Trajectory::at(int t) const {
    auto it = entries.find(t);
    if (it == entries.end())
        throw std::out_of_range("trajectory has no entry at timestep " + std::to_string(t));
    return it->second;
}

Tensor Denoiser::predict_noise(const Tensor& latent, int t) const {
    Tape tape(false);
    Var out = forward(tape, tape.constant(latent), t);
    return tape.value(out);
}

Tensor to_model_range(const Tensor& x01) {
    Tensor y = Tensor::zeros_like(x01);
    for (int i = 0; i < y.size(); i++) y.v[i] = 2.0f * x01.v[i] - 1.0f;
    return y;
}

Tensor from_model_range(const Tensor& xm) {
    Tensor y = Tensor::zeros_like(xm);
    for (int i = 0; i < y.size(); i++) y.v[i] = 0.5f * xm.v[i] + 0.5f;
    return y;
}

Tensor clamp01(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    for (int i = 0; i < y.size(); i++) y.v[i] = std::clamp(x.v[i], 0.0f, 1.0f);
    return y;
}

Var to_model_range(Tape& t, Var x01) { return t.affine(x01, 2.0, -1.0); }
Var from_model_range(Tape& t, Var xm) { return t.affine(xm, 0.5, 0.5); }

Latent q_sample(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& s) {
    require_same_shape(x0, noise, "q_sample");
    if (!s.valid_timestep(t)) throw std::invalid_argument("q_sample: timestep out of range");
    const double a = s.sqrt_alpha_bar(t);
    const double b = s.sqrt_one_minus_alpha_bar(t);
    Tensor y = Tensor::zeros_like(x0);
    for (int i = 0; i < y.size(); i++)
        y.v[i] = static_cast<float>(a * x0.v[i] + b * noise.v[i]);
    return Latent{std::move(y), t};
}

Var q_sample(Tape& tape, Var x0, int t, const Tensor& noise, const NoiseSchedule& s) {
    require_same_shape(tape.value(x0), noise, "q_sample");
    if (!s.valid_timestep(t)) throw std::invalid_argument("q_sample: timestep out of range");
    Var n = tape.constant(noise);
    return tape.axpby(s.sqrt_alpha_bar(t), x0, s.sqrt_one_minus_alpha_bar(t), n);
}

double dm_loss(const Denoiser& model, const Tensor& x0, int t, const Tensor& noise,
               const NoiseSchedule& s) {
    Tape tape(false);
    Var loss = dm_loss(tape, model, tape.constant(x0), t, noise, s);
    return tape.scalar(loss);
}

Var dm_loss(Tape& tape, const Denoiser& model, Var x0, int t, const Tensor& noise,
            const NoiseSchedule& s) {
    Var x_t = q_sample(tape, x0, t, noise, s);
    Var eps_hat = model.forward(tape, x_t, t);
    return tape.mse_against(eps_hat, noise);
}

Latent ddpm_step(const Denoiser& model, const Latent& x_t, const Tensor& z,
                 const NoiseSchedule& s) {
    const int t = x_t.timestep;
    if (t < 1) throw std::invalid_argument("ddpm_step: requires timestep >= 1");
    require_same_shape(x_t.values, z, "ddpm_step");
    Tensor eps = model.predict_noise(x_t.values, t);
    const double beta = s.beta(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double eps_coef = beta / s.sqrt_one_minus_alpha_bar(t);
    const double sigma = std::sqrt(beta);
    Tensor y = Tensor::zeros_like(x_t.values);
    for (int i = 0; i < y.size(); i++)
        y.v[i] = static_cast<float>(inv_sqrt_alpha * (x_t.values.v[i] - eps_coef * eps.v[i]) +
                                    sigma * z.v[i]);
    return Latent{std::move(y), t - 1};
}

DdimResult ddim_step(const Denoiser& model, const Latent& x_t, int t_now, int t_next,
                     const NoiseSchedule& s) {
    Tape tape(false);
    DdimVars vars = ddim_step(tape, model, tape.constant(x_t.values), t_now, t_next, s);
    return DdimResult{Latent{tape.value(vars.next), t_next}, tape.value(vars.x0_hat)};
}

DdimVars ddim_step(Tape& tape, const Denoiser& model, Var x_t, int t_now, int t_next,
                   const NoiseSchedule& s) {
    if (!(t_now > t_next && t_next >= 0))
        throw std::invalid_argument("ddim_step: need t_now > t_next >= 0");
    if (!s.valid_timestep(t_now) || !s.valid_timestep(t_next))
        throw std::invalid_argument("ddim_step: timestep out of schedule range");
    Var eps = model.forward(tape, x_t, t_now);
    const double sa_now = s.sqrt_alpha_bar(t_now);
    const double sb_now = s.sqrt_one_minus_alpha_bar(t_now);
    Var x0_hat = tape.axpby(1.0 / sa_now, x_t, -sb_now / sa_now, eps);
    Var next = tape.axpby(s.sqrt_alpha_bar(t_next), x0_hat,
                          s.sqrt_one_minus_alpha_bar(t_next), eps);
    return DdimVars{next, x0_hat};
}

Trajectory ddim_invert(const Denoiser& model, const Tensor& x0, const TimePairs& timepairs,
                       const NoiseSchedule& s, TrajectorySource kind) {
    Trajectory traj;
    traj.source_kind = kind;
    if (timepairs.pairs.empty()) throw std::invalid_argument("ddim_invert: empty timetable");
    const int t_base = timepairs.pairs.back().second;
    traj.entries[t_base] = Latent{x0, t_base};
    Tensor cur = x0;
    // reverse time order: walk the pairs from the clean end upward; the noise
    // prediction uses the lower timestep of each pair (forward-Euler)
    for (auto it = timepairs.pairs.rbegin(); it != timepairs.pairs.rend(); ++it) {
        const int t_hi = it->first, t_lo = it->second;
        Tensor eps = model.predict_noise(cur, t_lo);
        const double sa_lo = s.sqrt_alpha_bar(t_lo);
        const double sb_lo = s.sqrt_one_minus_alpha_bar(t_lo);
        const double sa_hi = s.sqrt_alpha_bar(t_hi);
        const double sb_hi = s.sqrt_one_minus_alpha_bar(t_hi);
        Tensor next = Tensor::zeros_like(cur);
        for (int i = 0; i < next.size(); i++) {
            const double x0_implied = (cur.v[i] - sb_lo * eps.v[i]) / sa_lo;
            next.v[i] = static_cast<float>(sa_hi * x0_implied + sb_hi * eps.v[i]);
        }
        cur = std::move(next);
        traj.entries[t_hi] = Latent{cur, t_hi};
    }
    return traj;
}

}  // namespace diffmatte
