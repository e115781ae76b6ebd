// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/matting.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmatte {

Trimap Trimap::from_map(Tensor values) {
    if (values.c != 1) throw std::invalid_argument("trimap must be single channel");
    for (float v : values.v)
        if (v != 0.0f && v != 0.5f && v != 1.0f)
            throw std::invalid_argument("trimap contains non-canonical value " +
                                        std::to_string(v));
    return Trimap{std::move(values)};
}

Tensor known_mask(const Trimap& trimap) {
    Tensor m = Tensor::zeros_like(trimap.values);
    for (int i = 0; i < m.size(); i++)
        m.v[i] = (trimap.values.v[i] == 0.0f || trimap.values.v[i] == 1.0f) ? 1.0f : 0.0f;
    return m;
}

Latent perturb_trimap(const Trimap& m, int T, const Tensor& noise, const NoiseSchedule& s) {
    return q_sample(to_model_range(m.values), T, noise, s);
}

Tensor sdedit_baseline(const Denoiser& model, const Trimap& m, int T, int steps,
                       const NoiseSchedule& s, const Tensor& noise) {
    TimePairs pairs = set_timepairs(T, steps, s);
    Latent x = perturb_trimap(m, T, noise, s);
    for (const auto& [t_now, t_next] : pairs.pairs)
        x = ddim_step(model, x, t_now, t_next, s).next;
    return clamp01(from_model_range(x.values));
}

Tensor apply_arp(const Tensor& m_corr, const Latent& trimap_inv_t, const Tensor& known) {
    require_same_shape(m_corr, trimap_inv_t.values, "apply_arp");
    require_same_shape(m_corr, known, "apply_arp");
    Tensor out = Tensor::zeros_like(m_corr);
    for (int i = 0; i < out.size(); i++)
        out.v[i] = known.v[i] != 0.0f ? trimap_inv_t.values.v[i] : m_corr.v[i];
    return out;
}

LossReport matting_losses(const Latent& m_stepped, const Tensor& alpha0_hat,
                          const Latent& alpha_inv_t, const MattingSample& sample,
                          const LossWeights& w) {
    Tape tape(false);
    LossReport rep;
    matting_losses(tape, tape.constant(m_stepped.values), tape.constant(alpha0_hat),
                   alpha_inv_t, sample, w, &rep);
    return rep;
}

Var matting_losses(Tape& tape, Var m_stepped, Var alpha0_hat, const Latent& alpha_inv_t,
                   const MattingSample& sample, const LossWeights& w, LossReport* report_out) {
    Var l_inv = tape.mse_against(m_stepped, alpha_inv_t.values);
    Var alpha01 = from_model_range(tape, alpha0_hat);
    Var l_alpha = tape.l1_against(alpha01, sample.alpha);

    std::vector<Var> terms{l_inv, l_alpha};
    std::vector<double> weights{w.lambda_inv, w.lambda_alpha};
    bool comp_skipped = true;
    Var l_comp{};
    if (sample.has_fg_bg()) {
        l_comp = tape.composition_l1(alpha01, sample.image, sample.foreground,
                                     sample.background);
        terms.push_back(l_comp);
        weights.push_back(w.lambda_comp);
        comp_skipped = false;
    }
    Var total = tape.weighted_sum(terms, weights);
    if (report_out) {
        report_out->inv = tape.scalar(l_inv);
        report_out->alpha = tape.scalar(l_alpha);
        report_out->comp = comp_skipped ? 0.0 : tape.scalar(l_comp);
        report_out->comp_skipped = comp_skipped;
        report_out->total = tape.scalar(total);
    }
    return total;
}

SampleTrajectories invert_sample(const Denoiser& denoiser, const MattingSample& sample,
                                 const TimePairs& pairs, const NoiseSchedule& s,
                                 bool with_alpha) {
    SampleTrajectories traj;
    if (with_alpha)
        traj.alpha_traj = ddim_invert(denoiser, to_model_range(sample.alpha), pairs, s,
                                      TrajectorySource::alpha_inversion);
    traj.trimap_traj = ddim_invert(denoiser, to_model_range(sample.trimap.values), pairs, s,
                                   TrajectorySource::trimap_inversion);
    return traj;
}

LossReport train_step_backward(const MattingSample& sample, const MattingModels& models,
                               const NoiseSchedule& s, int T, int steps, const LossWeights& w,
                               const Tensor& noise, const SampleTrajectories& traj,
                               bool use_arp) {
    if (!models.denoiser || !models.encoder || !models.correction)
        throw std::invalid_argument("train_step: missing model");
    TimePairs pairs = set_timepairs(T, steps, s);
    const Tensor known = known_mask(sample.trimap);

    Tape tape(true);
    Var features = models.encoder->forward(tape, tape.constant(sample.image));
    Latent perturbed = perturb_trimap(sample.trimap, T, noise, s);
    Var m_t = tape.constant(perturbed.values);

    std::vector<Var> step_losses;
    LossReport acc;
    for (const auto& [t_now, t_next] : pairs.pairs) {
        Var m_corr = models.correction->forward(tape, features, m_t, t_now);
        Var m_arp = use_arp
                        ? tape.masked_blend(m_corr, traj.trimap_traj.at(t_now).values, known)
                        : m_corr;
        DdimVars stepped;
        {
            Tape::FreezeScope freeze(tape);
            stepped = ddim_step(tape, *models.denoiser, m_arp, t_now, t_next, s);
        }
        m_t = stepped.next;
        LossReport rep;
        Var loss = matting_losses(tape, stepped.next, stepped.x0_hat,
                                  traj.alpha_traj.at(t_next), sample, w, &rep);
        step_losses.push_back(loss);
        acc.inv += rep.inv;
        acc.alpha += rep.alpha;
        acc.comp += rep.comp;
        acc.comp_skipped = rep.comp_skipped;
    }
    Var total = tape.weighted_sum(step_losses, std::vector<double>(step_losses.size(), 1.0));
    acc.total = tape.scalar(total);
    tape.backward(total);
    return acc;
}

LossReport train_step(const MattingSample& sample, const MattingModels& models,
                      const NoiseSchedule& s, int T, int steps, const LossWeights& w,
                      Rng& rng, Adam& optimizer) {
    TimePairs pairs = set_timepairs(T, steps, s);
    SampleTrajectories traj = invert_sample(*models.denoiser, sample, pairs, s, true);
    Tensor noise = rng.normal_map(1, sample.alpha.h, sample.alpha.w);
    LossReport rep = train_step_backward(sample, models, s, T, steps, w, noise, traj);
    optimizer.step();
    return rep;
}

Tensor infer(const Tensor& image, const Trimap& trimap, const MattingModels& models,
             const NoiseSchedule& s, const InferOptions& opt) {
    if (image.h != trimap.values.h || image.w != trimap.values.w)
        throw std::invalid_argument("infer: image/trimap size mismatch");
    TimePairs pairs = set_timepairs(opt.T, opt.steps, s);
    Trajectory trimap_traj = ddim_invert(*models.denoiser, to_model_range(trimap.values),
                                         pairs, s, TrajectorySource::trimap_inversion);
    const Tensor known = known_mask(trimap);
    Tensor features = models.encoder->encode(image);

    Rng rng(opt.noise_seed);
    Tensor noise = rng.normal_map(1, trimap.values.h, trimap.values.w);
    Latent m_t = perturb_trimap(trimap, opt.T, noise, s);

    int step_index = 0;
    for (const auto& [t_now, t_next] : pairs.pairs) {
        Tensor m_corr = models.correction->correct(features, m_t.values, t_now);
        Tensor m_arp = opt.use_arp ? apply_arp(m_corr, trimap_traj.at(t_now), known) : m_corr;
        DdimResult stepped = ddim_step(*models.denoiser, Latent{m_arp, t_now}, t_now, t_next, s);
        if (opt.debug)
            opt.debug(StepDump{step_index, t_now, t_next, stepped.next.values, m_corr, m_arp,
                               stepped.x0_hat});
        m_t = stepped.next;
        step_index++;
    }
    return clamp01(from_model_range(m_t.values));
}

}  // namespace diffmatte
