// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diffmatte/config.hpp"
#include "diffmatte/data.hpp"
#include "diffmatte/matting.hpp"

using namespace diffmatte;

namespace {

struct ConstDenoiser : Denoiser {
    float value = 0.0f;
    explicit ConstDenoiser(float v) : value(v) {}
    Var forward(Tape& t, Var x, int) const override {
        const Tensor& xt = t.value(x);
        return t.constant(Tensor::full(xt.c, xt.h, xt.w, value));
    }
    std::string snapshot_id() const override { return "const"; }
};

struct CountingDenoiser : Denoiser {
    const Denoiser& inner;
    mutable int calls = 0;
    explicit CountingDenoiser(const Denoiser& d) : inner(d) {}
    Var forward(Tape& t, Var x, int ts) const override {
        calls++;
        return inner.forward(t, x, ts);
    }
    std::string snapshot_id() const override { return inner.snapshot_id(); }
};

Trimap checker_trimap(int n) {
    Tensor t(1, n, n);
    for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++)
            t.at(0, y, x) = (y + x) % 3 == 0 ? 0.5f : ((y + x) % 3 == 1 ? 0.0f : 1.0f);
    return Trimap::from_map(std::move(t));
}

MattingSample toy_sample(Rng& rng, int n) {
    SyntheticSpec spec;
    spec.height = spec.width = n;
    TrimapSpec ts;
    ts.band_radius = 2;
    return make_sample("toy", spec, ts, rng);
}

struct ToyModels {
    DenoiserConfig dcfg;
    EncoderConfig ecfg;
    CorrectionConfig ccfg;
    std::unique_ptr<UNetDenoiser> denoiser;
    std::unique_ptr<ImageEncoder> encoder;
    std::unique_ptr<CorrectionNet> correction;

    explicit ToyModels(Rng& rng) {
        dcfg.base_width = 4;
        dcfg.depth = 2;
        dcfg.time_embed_dim = 16;
        ecfg.feature_channels = 4;
        ecfg.depth = 2;
        ccfg.feature_channels = 4;
        ccfg.base_width = 4;
        ccfg.depth = 2;
        ccfg.time_embed_dim = 16;
        denoiser = std::make_unique<UNetDenoiser>(dcfg, rng);
        encoder = std::make_unique<ImageEncoder>(ecfg, rng);
        correction = std::make_unique<CorrectionNet>(ccfg, rng);
    }
    MattingModels views() const {
        return MattingModels{denoiser.get(), encoder.get(), correction.get()};
    }
};

}  // namespace

TEST_CASE("trimap validation") {
    Tensor ok(1, 2, 2);
    ok.v = {0.0f, 0.5f, 1.0f, 0.5f};
    CHECK_NOTHROW(Trimap::from_map(ok));
    Tensor bad(1, 2, 2);
    bad.v = {0.0f, 0.3f, 1.0f, 0.5f};
    CHECK_THROWS(Trimap::from_map(bad));
}

TEST_CASE("known mask partitions the trimap") {
    Trimap tm = checker_trimap(9);
    Tensor known = known_mask(tm);
    for (int i = 0; i < known.size(); i++) {
        const bool is_known = tm.values.v[i] != 0.5f;
        CHECK(known.v[i] == (is_known ? 1.0f : 0.0f));
    }
}

TEST_CASE("perturb_trimap zero-noise rescale and Monte Carlo mean") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Trimap tm = checker_trimap(8);
    Tensor zero(1, 8, 8);
    const int T = 250;
    Latent l = perturb_trimap(tm, T, zero, s);
    CHECK(l.timestep == T);
    for (int i = 0; i < l.values.size(); i++)
        CHECK(l.values.v[i] == doctest::Approx(std::sqrt(s.alpha_bars[T]) *
                                               (2.0 * tm.values.v[i] - 1.0))
                                   .epsilon(1e-5));

    // per-pixel mean over draws converges to the rescaled trimap (3 sigma)
    Rng rng(3);
    const int draws = 400;
    Tensor acc(1, 8, 8);
    for (int k = 0; k < draws; k++) {
        Latent lk = perturb_trimap(tm, T, rng.normal_map(1, 8, 8), s);
        for (int i = 0; i < acc.size(); i++) acc.v[i] += lk.values.v[i];
    }
    const double sigma = std::sqrt((1.0 - s.alpha_bars[T]) / draws);
    for (int i = 0; i < acc.size(); i++) {
        const double mean = acc.v[i] / draws;
        const double expect = std::sqrt(s.alpha_bars[T]) * (2.0 * tm.values.v[i] - 1.0);
        CHECK(std::abs(mean - expect) < 3.0 * sigma + 1e-6);
    }
}

TEST_CASE("the default operating point matches the chosen settings") {
    ExperimentConfig cfg;
    CHECK(cfg.T == 250);
    CHECK(cfg.steps == 5);
    CHECK(cfg.lambda_inv == 2.0);
    CHECK(cfg.lambda_alpha == 1.0);
    CHECK(cfg.lambda_comp == 1.0);
    CHECK(cfg.lr == 1e-4);
    CHECK(cfg.num_train_steps == 1000);
}

TEST_CASE("sdedit baseline contract and zero-noise identity bound") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Trimap tm = checker_trimap(8);

    // garbage weights still produce a valid-range output
    Rng rng(5);
    DenoiserConfig dcfg;
    dcfg.base_width = 4;
    dcfg.depth = 2;
    dcfg.time_embed_dim = 16;
    UNetDenoiser garbage(dcfg, rng);
    Rng nrng(6);
    Tensor noise = nrng.normal_map(1, 8, 8);
    Tensor out = sdedit_baseline(garbage, tm, 250, 5, s, noise);
    CHECK(out.h == 8);
    CHECK(out.w == 8);
    for (float v : out.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // zero prediction, zero noise: pure rescale down then up; equality holds
    // to the sqrt(alpha_bar_0) bound (the t=0 level keeps 1-beta_0 signal)
    ConstDenoiser zeros(0.0f);
    Tensor zero(1, 8, 8);
    Tensor ident = sdedit_baseline(zeros, tm, 250, 5, s, zero);
    for (int i = 0; i < ident.size(); i++)
        CHECK(std::abs(ident.v[i] - tm.values.v[i]) < 1e-4);
}

TEST_CASE("apply_arp replacement, pass-through and checkerboard ownership") {
    Rng rng(7);
    Tensor m_corr = rng.normal_map(1, 8, 8);
    Latent inv{rng.normal_map(1, 8, 8), 100};

    Tensor all_known = Tensor::full(1, 8, 8, 1.0f);
    CHECK(apply_arp(m_corr, inv, all_known).v == inv.values.v);

    Tensor none_known(1, 8, 8);
    CHECK(apply_arp(m_corr, inv, none_known).v == m_corr.v);

    Tensor checker(1, 8, 8);
    for (int y = 0; y < 8; y++)
        for (int x = 0; x < 8; x++) checker.at(0, y, x) = (y + x) % 2 ? 1.0f : 0.0f;
    Tensor blended = apply_arp(m_corr, inv, checker);
    for (int i = 0; i < blended.size(); i++) {
        const float expect = checker.v[i] != 0.0f ? inv.values.v[i] : m_corr.v[i];
        CHECK(blended.v[i] == expect);  // bit-exact per-pixel ownership
    }

    Tensor wrong(1, 4, 4);
    CHECK_THROWS(apply_arp(m_corr, inv, wrong));
}

TEST_CASE("apply_arp idempotence and locality") {
    Rng rng(8);
    for (int trial = 0; trial < 20; trial++) {
        Tensor m_corr = rng.normal_map(1, 6, 6);
        Latent inv{rng.normal_map(1, 6, 6), 50};
        Tensor known(1, 6, 6);
        for (auto& v : known.v) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
        Tensor once = apply_arp(m_corr, inv, known);
        Tensor twice = apply_arp(once, inv, known);
        CHECK(once.v == twice.v);

        // changing m_corr only on known pixels leaves the output unchanged
        Tensor poked = m_corr;
        for (int i = 0; i < poked.size(); i++)
            if (known.v[i] != 0.0f) poked.v[i] += 5.0f;
        CHECK(apply_arp(poked, inv, known).v == once.v);

        // changing m_corr on unknown pixels only changes unknown outputs
        Tensor poked2 = m_corr;
        for (int i = 0; i < poked2.size(); i++)
            if (known.v[i] == 0.0f) poked2.v[i] += 5.0f;
        Tensor out2 = apply_arp(poked2, inv, known);
        for (int i = 0; i < out2.size(); i++)
            if (known.v[i] != 0.0f) CHECK(out2.v[i] == once.v[i]);
    }
}

TEST_CASE("matting_losses perfect prediction and scalar oracle") {
    Rng rng(9);
    MattingSample sample = toy_sample(rng, 16);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    LossWeights w;

    // perfect prediction: stepped latent equals the trajectory entry and the
    // one-step estimate equals the GT alpha
    Latent alpha_t{rng.normal_map(1, 16, 16), 100};
    Tensor alpha0_hat = to_model_range(sample.alpha);
    LossReport perfect = matting_losses(alpha_t, alpha0_hat, alpha_t, sample, w);
    CHECK(perfect.inv == 0.0);
    // model-range round trip leaves float-quantization residue only
    CHECK(perfect.alpha < 1e-7);
    CHECK(perfect.comp < 1e-7);
    CHECK(perfect.total < 1e-6);

    // 4x4 random inputs against independently computed terms
    Rng r2(10);
    MattingSample s4 = toy_sample(r2, 16);
    Latent stepped{r2.normal_map(1, 16, 16), 63};
    Latent inv{r2.normal_map(1, 16, 16), 63};
    Tensor a0 = r2.normal_map(1, 16, 16);
    LossWeights w2{2.0, 1.0, 1.0};
    LossReport rep = matting_losses(stepped, a0, inv, s4, w2);

    double l_inv = 0.0, l_alpha = 0.0, l_comp = 0.0;
    for (int i = 0; i < stepped.values.size(); i++) {
        const double d = static_cast<double>(stepped.values.v[i]) - inv.values.v[i];
        l_inv += d * d;
        const double a01 = 0.5 * static_cast<double>(a0.v[i]) + 0.5;
        l_alpha += std::abs(a01 - static_cast<double>(s4.alpha.v[i]));
    }
    l_inv /= stepped.values.size();
    l_alpha /= stepped.values.size();
    const int plane = 16 * 16;
    for (int ci = 0; ci < 3; ci++)
        for (int i = 0; i < plane; i++) {
            const double a01 = 0.5 * static_cast<double>(a0.v[i]) + 0.5;
            const double comp = a01 * s4.foreground.channel(ci)[i] +
                                (1.0 - a01) * s4.background.channel(ci)[i];
            l_comp += std::abs(s4.image.channel(ci)[i] - comp);
        }
    l_comp /= 3.0 * plane;
    CHECK(rep.inv == doctest::Approx(l_inv).epsilon(1e-7));
    CHECK(rep.alpha == doctest::Approx(l_alpha).epsilon(1e-7));
    CHECK(rep.comp == doctest::Approx(l_comp).epsilon(1e-7));
    CHECK(rep.total ==
          doctest::Approx(2.0 * l_inv + 1.0 * l_alpha + 1.0 * l_comp).epsilon(1e-7));
    CHECK_FALSE(rep.comp_skipped);
}

TEST_CASE("matting_losses skips composition without GT foreground/background") {
    Rng rng(11);
    MattingSample sample = toy_sample(rng, 16);
    sample.foreground = Tensor{};
    sample.background = Tensor{};
    Latent stepped{rng.normal_map(1, 16, 16), 63};
    Latent inv{rng.normal_map(1, 16, 16), 63};
    LossWeights w;
    LossReport rep = matting_losses(stepped, rng.normal_map(1, 16, 16), inv, sample, w);
    CHECK(rep.comp_skipped);
    CHECK(rep.comp == 0.0);
    CHECK(rep.total == doctest::Approx(2.0 * rep.inv + rep.alpha).epsilon(1e-9));
}

TEST_CASE("total loss is strictly monotone in lambda_inv unless L_inv is zero") {
    Rng rng(12);
    MattingSample sample = toy_sample(rng, 16);
    Latent stepped{rng.normal_map(1, 16, 16), 63};
    Latent inv{rng.normal_map(1, 16, 16), 63};
    Tensor a0 = rng.normal_map(1, 16, 16);
    LossReport lo = matting_losses(stepped, a0, inv, sample, LossWeights{1.0, 1.0, 1.0});
    LossReport hi = matting_losses(stepped, a0, inv, sample, LossWeights{3.0, 1.0, 1.0});
    CHECK(lo.inv > 0.0);
    CHECK(hi.total > lo.total);
    CHECK(hi.total - lo.total == doctest::Approx(2.0 * lo.inv).epsilon(1e-9));

    LossReport z = matting_losses(stepped, a0, stepped, sample, LossWeights{1.0, 1.0, 1.0});
    LossReport z2 = matting_losses(stepped, a0, stepped, sample, LossWeights{9.0, 1.0, 1.0});
    CHECK(z.total == doctest::Approx(z2.total).epsilon(1e-12));
}

TEST_CASE("train_step produces finite losses and nonzero correction gradients") {
    Rng rng(13);
    ToyModels models(rng);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng drng(14);
    MattingSample sample = toy_sample(drng, 16);
    const int T = 50, steps = 3;

    TimePairs pairs = set_timepairs(T, steps, s);
    SampleTrajectories traj = invert_sample(*models.denoiser, sample, pairs, s, true);
    Tensor noise = drng.normal_map(1, 16, 16);
    LossReport rep = train_step_backward(sample, models.views(), s, T, steps,
                                         LossWeights{}, noise, traj);
    CHECK(std::isfinite(rep.total));
    CHECK(rep.total > 0.0);
    double corr_grad = 0.0;
    for (auto* p : models.correction->parameters())
        for (float g : p->grad.v) corr_grad += std::abs(g);
    CHECK(corr_grad > 0.0);

    // the zero-initialized output conv blocks encoder gradients at step one;
    // after one update on the correction module they must flow
    std::vector<Parameter*> trainable = models.encoder->parameters();
    for (auto* p : models.correction->parameters()) trainable.push_back(p);
    Adam adam(trainable, AdamConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
    adam.step();
    LossReport rep2 = train_step_backward(sample, models.views(), s, T, steps,
                                          LossWeights{}, noise, traj);
    CHECK(std::isfinite(rep2.total));
    double enc_grad = 0.0;
    for (auto* p : models.encoder->parameters())
        for (float g : p->grad.v) enc_grad += std::abs(g);
    CHECK(enc_grad > 0.0);
    adam.zero_grad();
}

TEST_CASE("train_step leaves the denoiser frozen and runs one update") {
    Rng rng(15);
    ToyModels models(rng);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng drng(16);
    MattingSample sample = toy_sample(drng, 16);

    std::vector<Parameter*> trainable = models.encoder->parameters();
    for (auto* p : models.correction->parameters()) trainable.push_back(p);
    Adam adam(trainable, AdamConfig{1e-4, 0.9, 0.999, 1e-8, 1.0});

    const std::string fp_before = models.denoiser->snapshot_id();
    std::vector<float> enc_before = models.encoder->parameters()[0]->value.v;
    Rng step_rng(17);
    LossReport rep = train_step(sample, models.views(), s, 50, 2, LossWeights{}, step_rng, adam);
    CHECK(std::isfinite(rep.total));
    CHECK(models.denoiser->snapshot_id() == fp_before);  // bit-identical weights
    CHECK(adam.step_count() == 1);
    // the correction output conv has gradients from step one and must move
    Parameter* out_w = nullptr;
    for (auto* p : models.correction->parameters())
        if (p->name.find(".out.w") != std::string::npos) out_w = p;
    REQUIRE(out_w != nullptr);
    double moved = 0.0;
    for (float v : out_w->value.v) moved += std::abs(v);
    CHECK(moved > 0.0);  // was zero-initialized
    // a second step propagates into the encoder as well
    LossReport rep2 =
        train_step(sample, models.views(), s, 50, 2, LossWeights{}, step_rng, adam);
    CHECK(std::isfinite(rep2.total));
    CHECK(models.encoder->parameters()[0]->value.v != enc_before);
}

TEST_CASE("with steps=1 exactly one correction/loss evaluation occurs") {
    Rng rng(18);
    ToyModels models(rng);
    CountingDenoiser counter(*models.denoiser);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng drng(19);
    MattingSample sample = toy_sample(drng, 16);

    MattingModels views{&counter, models.encoder.get(), models.correction.get()};
    TimePairs pairs = set_timepairs(50, 1, s);
    REQUIRE(pairs.pairs.size() == 1);
    SampleTrajectories traj = invert_sample(counter, sample, pairs, s, true);
    const int after_inversion = counter.calls;
    CHECK(after_inversion == 2);  // one per trajectory for a single pair

    Tensor noise = drng.normal_map(1, 16, 16);
    LossReport rep = train_step_backward(sample, views, s, 50, 1, LossWeights{}, noise, traj);
    CHECK(counter.calls - after_inversion == 1);  // one ddim step in the loop
    CHECK(std::isfinite(rep.total));
    for (auto* p : models.encoder->parameters()) p->zero_grad();
    for (auto* p : models.correction->parameters()) p->zero_grad();
}

TEST_CASE("inference contract: shape, range, determinism") {
    Rng rng(20);
    ToyModels models(rng);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng drng(21);
    MattingSample sample = toy_sample(drng, 16);

    InferOptions opt;
    opt.T = 50;
    opt.steps = 3;
    opt.noise_seed = 1234;
    MattingModels views = models.views();
    Tensor out = infer(sample.image, sample.trimap, views, s, opt);
    CHECK(out.c == 1);
    CHECK(out.h == 16);
    for (float v : out.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    Tensor out2 = infer(sample.image, sample.trimap, views, s, opt);
    CHECK(out.v == out2.v);  // same seed, bit-identical

    opt.noise_seed = 99;
    Tensor out3 = infer(sample.image, sample.trimap, views, s, opt);
    CHECK(out.v != out3.v);

    Tensor small(3, 8, 8);
    CHECK_THROWS(infer(small, sample.trimap, views, s, opt));
}

TEST_CASE("debug hook sees one dump per sampling step") {
    Rng rng(22);
    ToyModels models(rng);
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    Rng drng(23);
    MattingSample sample = toy_sample(drng, 16);
    InferOptions opt;
    opt.T = 50;
    opt.steps = 5;
    int dumps = 0;
    opt.debug = [&](const StepDump& d) {
        CHECK(d.step_index == dumps);
        CHECK(d.m_t.h == 16);
        CHECK(d.m_corr.h == 16);
        CHECK(d.m_arp.h == 16);
        CHECK(d.alpha0.h == 16);
        dumps++;
    };
    MattingModels views = models.views();
    infer(sample.image, sample.trimap, views, s, opt);
    CHECK(dumps == 5);
}
