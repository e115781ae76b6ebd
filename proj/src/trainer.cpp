// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "diffmatte/image_io.hpp"

namespace diffmatte {

namespace fs = std::filesystem;

int sample_timestep(Rng& rng, const NoiseSchedule& s) {
    return rng.uniform_int(s.num_train_steps);
}

double validation_dm_loss(const Denoiser& den, const std::vector<MattingSample>& samples,
                          const NoiseSchedule& s, uint64_t seed) {
    Rng rng(seed);
    double acc = 0.0;
    for (const auto& sample : samples) {
        const int t = sample_timestep(rng, s);
        Tensor noise = rng.normal_map(1, sample.alpha.h, sample.alpha.w);
        acc += dm_loss(den, to_model_range(sample.alpha), t, noise, s);
    }
    return acc / static_cast<double>(samples.size());
}

namespace {

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; i--)
        std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
}

void store_params(Checkpoint& ckpt, const std::string& prefix, std::vector<Parameter*> params) {
    for (auto* p : params) ckpt.tensors[prefix + "/" + p->name] = p->value;
}

void restore_params(const Checkpoint& ckpt, const std::string& prefix,
                    std::vector<Parameter*> params) {
    for (auto* p : params) {
        const Tensor& t = ckpt.get(prefix + "/" + p->name);
        if (!t.same_shape(p->value))
            throw std::runtime_error("checkpoint shape mismatch for " + p->name);
        p->value = t;
    }
}

const char* kScheduleKeys[] = {"num_train_steps", "beta_start", "beta_end"};
const char* kDenoiserKeys[] = {"denoiser_width", "denoiser_depth", "time_embed_dim",
                               "use_attention"};

void check_config_keys(const std::map<std::string, std::string>& stored,
                       const ExperimentConfig& expect, const char* const* keys, size_t n,
                       const std::string& what) {
    const auto want = config_map(expect);
    for (size_t i = 0; i < n; i++) {
        const std::string k = keys[i];
        auto it = stored.find(k);
        if (it == stored.end() || it->second != want.at(k))
            throw std::runtime_error(what + ": config mismatch on '" + k + "' (checkpoint has " +
                                     (it == stored.end() ? std::string("<missing>") : it->second) +
                                     ", expected " + want.at(k) + ")");
    }
}

// symmetric reflection pad to the next multiple of `mult` on the right/bottom
Tensor reflect_pad_to(const Tensor& t, int mult) {
    const int H = (t.h + mult - 1) / mult * mult;
    const int W = (t.w + mult - 1) / mult * mult;
    if (H == t.h && W == t.w) return t;
    auto sym = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    Tensor out(t.c, H, W);
    for (int ci = 0; ci < t.c; ci++)
        for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++)
                out.at(ci, y, x) = t.at(ci, sym(y, t.h), sym(x, t.w));
    return out;
}

Tensor crop_to(const Tensor& t, int h, int w) {
    if (t.h == h && t.w == w) return t;
    Tensor out(t.c, h, w);
    for (int ci = 0; ci < t.c; ci++)
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++) out.at(ci, y, x) = t.at(ci, y, x);
    return out;
}

}  // namespace

DiffusionTrainResult train_diffusion(const ExperimentConfig& cfg, const std::string& data_root,
                                     const std::string& out_dir, bool resume) {
    cfg.validate();
    fs::create_directories(out_dir);
    const NoiseSchedule schedule = cfg.make_noise_schedule();
    auto train = load_split(data_root, "train");
    auto test = load_split(data_root, "test");
    if (train.empty()) throw std::runtime_error("train split is empty under " + data_root);

    Rng init_rng(Rng::splitmix(cfg.seed) ^ 0xd1ffu);
    UNetDenoiser denoiser(cfg.denoiser_config(), init_rng);
    Adam adam(denoiser.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    EmaWeights ema(denoiser.parameters(), cfg.ema_decay);

    const std::string ckpt_path = out_dir + "/denoiser.ckpt";
    int64_t start_step = 0;
    if (resume) {
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        if (ckpt.kind != "denoiser") throw std::runtime_error("not a denoiser checkpoint");
        check_config_keys(ckpt.config, cfg, kScheduleKeys, std::size(kScheduleKeys), "resume");
        check_config_keys(ckpt.config, cfg, kDenoiserKeys, std::size(kDenoiserKeys), "resume");
        restore_params(ckpt, "model", denoiser.parameters());
        std::map<std::string, Tensor> opt_state;
        for (const auto& [k, v] : ckpt.tensors)
            if (k.rfind("opt/", 0) == 0) opt_state[k.substr(4)] = v;
        adam.import_state(opt_state, ckpt.meta.at("adam_step"));
        std::vector<Tensor> shadow;
        for (auto* p : denoiser.parameters()) shadow.push_back(ckpt.get("ema/" + p->name));
        ema.set_shadow(std::move(shadow));
        start_step = ckpt.meta.at("trained_steps");
    }

    Rng data_rng(Rng::splitmix(cfg.seed) ^ 0xda7au);
    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = static_cast<int>(i);
    shuffle_indices(order, data_rng);
    size_t cursor = 0;

    std::ofstream log(out_dir + "/diffusion_loss.tsv", resume ? std::ios::app : std::ios::trunc);
    if (start_step == 0) log << "step\tloss\n";

    DiffusionTrainResult result;
    result.ckpt_path = ckpt_path;
    double window_acc = 0.0;
    int window_n = 0;
    bool first_window_done = false;
    const int window = std::max(1, cfg.log_every);

    for (int64_t step = start_step; step < cfg.diffusion_steps_budget; step++) {
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; b++) {
            if (cursor >= order.size()) {
                shuffle_indices(order, data_rng);
                cursor = 0;
            }
            const MattingSample& sample = train[order[cursor++]];
            const int t = sample_timestep(data_rng, schedule);
            Tensor noise = data_rng.normal_map(1, sample.alpha.h, sample.alpha.w);
            Tape tape(true);
            Var loss = dm_loss(tape, denoiser, tape.constant(to_model_range(sample.alpha)), t,
                               noise, schedule);
            tape.backward(loss);
            batch_loss += tape.scalar(loss);
        }
        batch_loss /= cfg.batch_size;
        adam.step();
        ema.update();

        window_acc += batch_loss;
        window_n++;
        if (window_n == window) {
            if (!first_window_done) {
                result.first_window_loss = window_acc / window_n;
                first_window_done = true;
            }
            result.last_window_loss = window_acc / window_n;
            log << (step + 1) << "\t" << window_acc / window_n << "\n";
            window_acc = 0.0;
            window_n = 0;
        }

        if (cfg.sample_dump_every > 0 && (step + 1) % cfg.sample_dump_every == 0) {
            // qualitative DDPM chain from pure noise under the EMA-free weights
            Rng srng(Rng::splitmix(cfg.seed) ^ static_cast<uint64_t>(step));
            Latent x{srng.normal_map(1, cfg.resolution, cfg.resolution),
                     schedule.num_train_steps - 1};
            while (x.timestep >= 1) {
                Tensor z = x.timestep > 1 ? srng.normal_map(1, x.values.h, x.values.w)
                                          : Tensor(1, x.values.h, x.values.w);
                x = ddpm_step(denoiser, x, z, schedule);
            }
            fs::create_directories(out_dir + "/samples");
            write_png_gray16(out_dir + "/samples/step" + std::to_string(step + 1) + ".png",
                             clamp01(from_model_range(x.values)));
        }
    }
    if (window_n > 0) result.last_window_loss = window_acc / window_n;

    Checkpoint ckpt;
    ckpt.kind = "denoiser";
    ckpt.config = config_map(cfg);
    store_params(ckpt, "model", denoiser.parameters());
    {
        size_t i = 0;
        for (auto* p : denoiser.parameters()) ckpt.tensors["ema/" + p->name] = ema.shadow()[i++];
    }
    for (const auto& [k, v] : adam.export_state()) ckpt.tensors["opt/" + k] = v;
    ckpt.meta["adam_step"] = adam.step_count();
    ckpt.meta["trained_steps"] = cfg.diffusion_steps_budget;
    save_checkpoint(ckpt_path, ckpt);

    if (!test.empty()) {
        const double val = validation_dm_loss(denoiser, test, schedule, cfg.seed ^ 0x7a1ull);
        std::ofstream vf(out_dir + "/diffusion_val.txt");
        vf.precision(17);
        vf << val << "\n";
    }
    return result;
}

std::unique_ptr<UNetDenoiser> load_denoiser_checkpoint(const std::string& path, bool use_ema,
                                                       const ExperimentConfig* expect) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "denoiser")
        throw std::runtime_error(path + " is not a denoiser checkpoint");
    if (expect) {
        check_config_keys(ckpt.config, *expect, kScheduleKeys, std::size(kScheduleKeys),
                          "denoiser checkpoint");
        check_config_keys(ckpt.config, *expect, kDenoiserKeys, std::size(kDenoiserKeys),
                          "denoiser checkpoint");
    }
    ExperimentConfig stored = config_from_map(ckpt.config);
    Rng rng(0);
    auto den = std::make_unique<UNetDenoiser>(stored.denoiser_config(), rng);
    restore_params(ckpt, use_ema ? "ema" : "model", den->parameters());
    return den;
}

std::string variant_name(MattingVariant v) {
    switch (v) {
        case MattingVariant::full: return "full";
        case MattingVariant::wo_arp: return "wo_arp";
        case MattingVariant::wo_diffusion: return "wo_diffusion";
    }
    return "?";
}

namespace {

// one-shot path: cat(f_I, trimap) -> correction net at t = 0
Tensor wo_diffusion_infer(ImageEncoder& enc, CorrectionNet& corr, const Tensor& image,
                          const Trimap& trimap) {
    Tensor f = enc.encode(image);
    Tensor pred = corr.correct(f, to_model_range(trimap.values), 0);
    return clamp01(from_model_range(pred));
}

LossReport wo_diffusion_backward(ImageEncoder& enc, CorrectionNet& corr,
                                 const MattingSample& sample, const LossWeights& w) {
    Tape tape(true);
    Var f = enc.forward(tape, tape.constant(sample.image));
    Var pred = corr.forward(tape, f, tape.constant(to_model_range(sample.trimap.values)), 0);
    Var alpha01 = from_model_range(tape, pred);
    Var l_alpha = tape.l1_against(alpha01, sample.alpha);
    std::vector<Var> terms{l_alpha};
    std::vector<double> weights{w.lambda_alpha};
    LossReport rep;
    rep.comp_skipped = !sample.has_fg_bg();
    if (!rep.comp_skipped) {
        Var l_comp = tape.composition_l1(alpha01, sample.image, sample.foreground,
                                         sample.background);
        terms.push_back(l_comp);
        weights.push_back(w.lambda_comp);
        rep.comp = tape.scalar(l_comp);
    }
    Var total = tape.weighted_sum(terms, weights);
    rep.alpha = tape.scalar(l_alpha);
    rep.total = tape.scalar(total);
    tape.backward(total);
    return rep;
}

}  // namespace

MattingTrainResult train_matting(const ExperimentConfig& cfg, const std::string& data_root,
                                 const std::string& denoiser_ckpt, const std::string& out_dir,
                                 MattingVariant variant) {
    cfg.validate();
    fs::create_directories(out_dir);
    const NoiseSchedule schedule = cfg.make_noise_schedule();
    auto train = load_split(data_root, "train");
    auto val = load_split(data_root, "test");
    if (train.empty()) throw std::runtime_error("train split is empty under " + data_root);

    auto denoiser = load_denoiser_checkpoint(denoiser_ckpt, true, &cfg);
    const std::string den_fp = denoiser->snapshot_id();

    Rng init_rng(Rng::splitmix(cfg.seed) ^ 0x3a77u);
    ImageEncoder encoder(cfg.encoder_config(), init_rng);
    CorrectionNet correction(cfg.correction_config(), init_rng);

    std::vector<Parameter*> trainable = encoder.parameters();
    for (auto* p : correction.parameters()) trainable.push_back(p);
    Adam adam(trainable, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip});

    MattingModels models{denoiser.get(), &encoder, &correction};
    const TimePairs pairs = set_timepairs(cfg.T, cfg.steps, schedule);
    const LossWeights w = cfg.loss_weights();

    // trajectories depend only on (sample, frozen weights, timetable): cache
    std::vector<SampleTrajectories> traj_cache(train.size());
    std::vector<char> traj_ready(train.size(), 0);

    Rng data_rng(Rng::splitmix(cfg.seed) ^ 0x7a41u);
    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = static_cast<int>(i);
    shuffle_indices(order, data_rng);
    size_t cursor = 0;

    std::ofstream log(out_dir + "/matting_loss.tsv");
    log << "step\ttotal\tinv\talpha\tcomp\tval_sad\n";

    auto eval_val_sad = [&]() -> double {
        if (val.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& sample : val) {
            Tensor pred;
            if (variant == MattingVariant::wo_diffusion) {
                pred = wo_diffusion_infer(encoder, correction, sample.image, sample.trimap);
            } else {
                InferOptions opt;
                opt.T = cfg.T;
                opt.steps = cfg.steps;
                opt.use_arp = variant != MattingVariant::wo_arp;
                opt.noise_seed = sample_noise_seed(cfg.seed, sample.id);
                pred = infer(sample.image, sample.trimap, models, schedule, opt);
            }
            Tensor mask = Tensor::zeros_like(sample.alpha);
            for (int i = 0; i < mask.size(); i++)
                mask.v[i] = sample.trimap.values.v[i] == 0.5f ? 1.0f : 0.0f;
            acc += sad(pred, sample.alpha, mask);
        }
        return acc / static_cast<double>(val.size());
    };

    MattingTrainResult result;
    double best_sad = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_weights;
    auto snapshot_best = [&](double val_sad, int step) {
        if (val_sad >= best_sad) return;
        best_sad = val_sad;
        result.best_val_sad = val_sad;
        result.best_step = step;
        best_weights.clear();
        for (auto* p : trainable) best_weights.push_back(p->value);
    };

    double window_total = 0.0;
    int window_n = 0;
    bool first_window_done = false;
    const int window = std::max(1, cfg.log_every);

    for (int step = 0; step < cfg.matting_steps_budget; step++) {
        LossReport batch;
        for (int b = 0; b < cfg.batch_size; b++) {
            if (cursor >= order.size()) {
                shuffle_indices(order, data_rng);
                cursor = 0;
            }
            const int si = order[cursor++];
            const MattingSample& sample = train[si];
            LossReport rep;
            if (variant == MattingVariant::wo_diffusion) {
                rep = wo_diffusion_backward(encoder, correction, sample, w);
            } else {
                if (!traj_ready[si]) {
                    traj_cache[si] = invert_sample(*denoiser, sample, pairs, schedule, true);
                    traj_ready[si] = 1;
                }
                Tensor noise = data_rng.normal_map(1, sample.alpha.h, sample.alpha.w);
                rep = train_step_backward(sample, models, schedule, cfg.T, cfg.steps, w, noise,
                                          traj_cache[si], variant != MattingVariant::wo_arp);
            }
            batch.total += rep.total;
            batch.inv += rep.inv;
            batch.alpha += rep.alpha;
            batch.comp += rep.comp;
            batch.comp_skipped = rep.comp_skipped;
        }
        adam.step();
        const double bt = batch.total / cfg.batch_size;
        window_total += bt;
        window_n++;

        const bool do_val = (step + 1) % std::max(1, cfg.val_every) == 0 ||
                            step + 1 == cfg.matting_steps_budget;
        double val_sad = -1.0;
        if (do_val) {
            val_sad = eval_val_sad();
            snapshot_best(val_sad, step + 1);
        }
        if (window_n == window || do_val) {
            if (!first_window_done) {
                result.first_window_total = window_total / window_n;
                first_window_done = true;
            }
            result.last_window_total = window_total / window_n;
            log << (step + 1) << "\t" << bt << "\t" << batch.inv / cfg.batch_size << "\t"
                << batch.alpha / cfg.batch_size << "\t" << batch.comp / cfg.batch_size << "\t";
            if (val_sad >= 0.0) log << val_sad;
            log << "\n";
            window_total = 0.0;
            window_n = 0;
        }
    }

    if (!best_weights.empty()) {
        size_t i = 0;
        for (auto* p : trainable) p->value = best_weights[i++];
    }

    Checkpoint ckpt;
    ckpt.kind = "matting";
    ckpt.config = config_map(cfg);
    ckpt.config["variant"] = variant_name(variant);
    ckpt.config["denoiser_fingerprint"] = den_fp;
    store_params(ckpt, "encoder", encoder.parameters());
    store_params(ckpt, "correction", correction.parameters());
    ckpt.meta["best_step"] = result.best_step;
    const std::string ckpt_path = out_dir + "/matting.ckpt";
    save_checkpoint(ckpt_path, ckpt);
    result.ckpt_path = ckpt_path;
    return result;
}

MattingRuntime load_matting_runtime(const std::string& denoiser_ckpt,
                                    const std::string& matting_ckpt) {
    Checkpoint ckpt = load_checkpoint(matting_ckpt);
    if (ckpt.kind != "matting")
        throw std::runtime_error(matting_ckpt + " is not a matting checkpoint");
    MattingRuntime rt;
    rt.cfg = config_from_map(ckpt.config);
    rt.schedule = rt.cfg.make_noise_schedule();
    rt.denoiser = load_denoiser_checkpoint(denoiser_ckpt, true, &rt.cfg);
    const std::string variant = ckpt.config.count("variant") ? ckpt.config.at("variant") : "full";
    if (variant == "wo_arp")
        rt.variant = MattingVariant::wo_arp;
    else if (variant == "wo_diffusion")
        rt.variant = MattingVariant::wo_diffusion;

    Rng rng(0);
    rt.encoder = std::make_unique<ImageEncoder>(rt.cfg.encoder_config(), rng);
    rt.correction = std::make_unique<CorrectionNet>(rt.cfg.correction_config(), rng);
    restore_params(ckpt, "encoder", rt.encoder->parameters());
    restore_params(ckpt, "correction", rt.correction->parameters());
    if (ckpt.config.count("denoiser_fingerprint") &&
        ckpt.config.at("denoiser_fingerprint") != rt.denoiser->snapshot_id())
        throw std::runtime_error(
            "matting checkpoint was trained against a different denoiser snapshot");
    return rt;
}

uint64_t sample_noise_seed(uint64_t base, const std::string& id) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : id) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return Rng::splitmix(base) ^ h;
}

Tensor infer_matte(MattingRuntime& rt, const Tensor& image, const Trimap& trimap,
                   uint64_t noise_seed, const DebugHook& debug) {
    if (image.h != trimap.values.h || image.w != trimap.values.w)
        throw std::invalid_argument("infer: image/trimap size mismatch");
    const int depth = std::max({rt.cfg.denoiser_depth, rt.cfg.encoder_depth,
                                rt.cfg.correction_depth});
    const int mult = 1 << depth;
    const int orig_h = image.h, orig_w = image.w;
    Tensor img = reflect_pad_to(image, mult);
    Trimap tm{reflect_pad_to(trimap.values, mult)};

    Tensor pred;
    if (rt.variant == MattingVariant::wo_diffusion) {
        pred = wo_diffusion_infer(*rt.encoder, *rt.correction, img, tm);
    } else {
        InferOptions opt;
        opt.T = rt.cfg.T;
        opt.steps = rt.cfg.steps;
        opt.use_arp = rt.variant != MattingVariant::wo_arp;
        opt.noise_seed = noise_seed;
        opt.debug = debug;
        MattingModels models = rt.models();
        pred = infer(img, tm, models, rt.schedule, opt);
    }
    return crop_to(pred, orig_h, orig_w);
}

void run_inference_dir(MattingRuntime& rt, const std::string& split_dir,
                       const std::string& out_dir, uint64_t seed, bool debug) {
    fs::create_directories(out_dir);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(split_dir))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        const std::string dir = split_dir + "/" + id;
        if (!fs::exists(dir + "/trimap.png"))
            throw std::runtime_error("missing trimap for sample " + id);
        MattingSample sample = load_sample(dir, id);
        DebugHook hook;
        if (debug) {
            const std::string ddir = out_dir + "/debug/" + id;
            fs::create_directories(ddir);
            hook = [ddir](const StepDump& d) {
                auto dump = [&](const std::string& tag, const Tensor& t) {
                    write_png_gray16(ddir + "/step" + std::to_string(d.step_index) + "_" + tag +
                                         ".png",
                                     clamp01(from_model_range(t)));
                };
                dump("m_t", d.m_t);
                dump("m_corr", d.m_corr);
                dump("m_arp", d.m_arp);
                dump("alpha0", d.alpha0);
            };
        }
        Tensor pred = infer_matte(rt, sample.image, sample.trimap,
                                  sample_noise_seed(seed, id), hook);
        save_matte(out_dir + "/" + id + ".png", pred);
    }
}

double mean_unknown_sad(MattingRuntime& rt, const std::vector<MattingSample>& samples,
                        uint64_t seed_base) {
    double acc = 0.0;
    for (const auto& sample : samples) {
        Tensor pred = infer_matte(rt, sample.image, sample.trimap,
                                  sample_noise_seed(seed_base, sample.id));
        Tensor mask = Tensor::zeros_like(sample.alpha);
        for (int i = 0; i < mask.size(); i++)
            mask.v[i] = sample.trimap.values.v[i] == 0.5f ? 1.0f : 0.0f;
        acc += sad(pred, sample.alpha, mask);
    }
    return acc / static_cast<double>(samples.size());
}

double trimap_baseline_sad(const std::vector<MattingSample>& samples) {
    double acc = 0.0;
    for (const auto& sample : samples) {
        Tensor mask = Tensor::zeros_like(sample.alpha);
        for (int i = 0; i < mask.size(); i++)
            mask.v[i] = sample.trimap.values.v[i] == 0.5f ? 1.0f : 0.0f;
        acc += sad(sample.trimap.values, sample.alpha, mask);
    }
    return acc / static_cast<double>(samples.size());
}

}  // namespace diffmatte
