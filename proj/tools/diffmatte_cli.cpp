// SPDX-License-Identifier: Apache-2.0
// Command-line entry points: dataset generation, denoiser pretraining,
// matting training, inference, evaluation and the ablation harness.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "diffmatte/ablation.hpp"
#include "diffmatte/trainer.hpp"

namespace fs = std::filesystem;
using namespace diffmatte;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out = "runs/out";
    bool force = false;
    bool debug = false;
    int64_t seed = -1;
    int T = -1;
    int steps = -1;
    double lambda_inv = -1.0, lambda_alpha = -1.0, lambda_comp = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "flat key = value config file");
    cmd->add_option("--seed", a.seed, "override config seed");
    cmd->add_option("--out", a.out, "run output directory");
    cmd->add_flag("--force", a.force, "overwrite non-empty output directories");
    cmd->add_flag("--debug", a.debug, "dump per-step diagnostics");
    cmd->add_option("--T", a.T, "perturbation timestep override");
    cmd->add_option("--steps", a.steps, "sampling steps override");
    cmd->add_option("--lambda-inv", a.lambda_inv, "inversion loss weight override");
    cmd->add_option("--lambda-alpha", a.lambda_alpha, "alpha loss weight override");
    cmd->add_option("--lambda-comp", a.lambda_comp, "composition loss weight override");
}

ExperimentConfig resolve_config(const CommonArgs& a) {
    ExperimentConfig cfg;
    if (!a.config_path.empty()) cfg = parse_config_file(a.config_path);
    if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
    if (a.T >= 0) cfg.T = a.T;
    if (a.steps >= 0) cfg.steps = a.steps;
    if (a.lambda_inv >= 0.0) cfg.lambda_inv = a.lambda_inv;
    if (a.lambda_alpha >= 0.0) cfg.lambda_alpha = a.lambda_alpha;
    if (a.lambda_comp >= 0.0) cfg.lambda_comp = a.lambda_comp;
    cfg.validate();
    return cfg;
}

// every command echoes its effective config into the run directory, plus a
// verbatim copy of the input config file when one was given
void open_run_dir(const std::string& out, const ExperimentConfig& cfg, const CommonArgs& a) {
    if (fs::exists(out) && !fs::is_empty(out) && !a.force)
        throw std::runtime_error("output directory " + out +
                                 " is not empty (use --force to overwrite)");
    fs::create_directories(out);
    write_config(out + "/config.txt", cfg);
    if (!a.config_path.empty())
        fs::copy_file(a.config_path, out + "/config_input.txt",
                      fs::copy_options::overwrite_existing);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trimap-to-alpha matting via a pretrained alpha-matte diffusion model"};
    app.require_subcommand(1);

    CommonArgs gen_a, td_a, tm_a, inf_a, ev_a, ab_a;
    std::string data_dir, denoiser_ckpt, matting_ckpt, input_dir, pred_dir, gt_dir, variant;
    bool resume = false;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen, gen_a);

    auto* td = app.add_subcommand("train-diffusion", "pretrain the unconditional denoiser");
    add_common(td, td_a);
    td->add_option("--data", data_dir, "dataset root (defaults to config data_dir)");
    td->add_flag("--resume", resume, "resume from the checkpoint in --out");

    auto* tm = app.add_subcommand("train-matting", "train encoder + correction module");
    add_common(tm, tm_a);
    tm->add_option("--data", data_dir, "dataset root");
    tm->add_option("--denoiser", denoiser_ckpt, "frozen denoiser checkpoint")->required();
    tm->add_option("--variant", variant, "training variant (full|wo_arp|wo_diffusion)");

    auto* inf = app.add_subcommand("infer", "predict mattes for images + trimaps");
    add_common(inf, inf_a);
    inf->add_option("--input", input_dir, "directory of <id>/{image.png,trimap.png}")->required();
    inf->add_option("--denoiser", denoiser_ckpt, "denoiser checkpoint")->required();
    inf->add_option("--ckpt", matting_ckpt, "matting checkpoint")->required();

    auto* ev = app.add_subcommand("eval", "matting metrics over a prediction directory");
    add_common(ev, ev_a);
    ev->add_option("--pred", pred_dir, "directory of predicted <id>.png")->required();
    ev->add_option("--gt", gt_dir, "dataset split directory with GT")->required();

    auto* ab = app.add_subcommand("ablate", "run the ablation table");
    add_common(ab, ab_a);
    ab->add_option("--data", data_dir, "dataset root");
    ab->add_option("--denoiser", denoiser_ckpt, "pretrained denoiser checkpoint")->required();
    ab->add_option("--variant", variant, "run a single named variant");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            ExperimentConfig cfg = resolve_config(gen_a);
            open_run_dir(gen_a.out, cfg, gen_a);
            DatasetIndex idx = generate_dataset(gen_a.out, cfg.synthetic_spec(),
                                                cfg.trimap_spec(), cfg.train_samples,
                                                cfg.test_samples);
            std::cout << "wrote " << idx.train_ids.size() << " train / " << idx.test_ids.size()
                      << " test samples under " << gen_a.out << "\n";
        } else if (*td) {
            ExperimentConfig cfg = resolve_config(td_a);
            if (data_dir.empty()) data_dir = cfg.data_dir;
            if (!resume) open_run_dir(td_a.out, cfg, td_a);
            auto res = train_diffusion(cfg, data_dir, td_a.out, resume);
            std::cout << "denoiser checkpoint: " << res.ckpt_path
                      << " (loss " << res.first_window_loss << " -> " << res.last_window_loss
                      << ")\n";
        } else if (*tm) {
            ExperimentConfig cfg = resolve_config(tm_a);
            if (data_dir.empty()) data_dir = cfg.data_dir;
            MattingVariant v = MattingVariant::full;
            if (variant == "wo_arp")
                v = MattingVariant::wo_arp;
            else if (variant == "wo_diffusion")
                v = MattingVariant::wo_diffusion;
            else if (!variant.empty() && variant != "full")
                throw std::runtime_error("unknown training variant '" + variant + "'");
            open_run_dir(tm_a.out, cfg, tm_a);
            auto res = train_matting(cfg, data_dir, denoiser_ckpt, tm_a.out, v);
            std::cout << "matting checkpoint: " << res.ckpt_path << " (best val SAD "
                      << res.best_val_sad << " at step " << res.best_step << ")\n";
        } else if (*inf) {
            ExperimentConfig cli_cfg = resolve_config(inf_a);
            MattingRuntime rt = load_matting_runtime(denoiser_ckpt, matting_ckpt);
            if (inf_a.T >= 0) rt.cfg.T = inf_a.T;
            if (inf_a.steps >= 0) rt.cfg.steps = inf_a.steps;
            open_run_dir(inf_a.out, rt.cfg, inf_a);
            run_inference_dir(rt, input_dir, inf_a.out, cli_cfg.seed, inf_a.debug);
            std::cout << "mattes written to " << inf_a.out << "\n";
        } else if (*ev) {
            ExperimentConfig cfg = resolve_config(ev_a);
            open_run_dir(ev_a.out, cfg, ev_a);
            EvalTable table = evaluate_dataset(pred_dir, gt_dir);
            write_table(ev_a.out + "/metrics.tsv", table);
            std::cout << format_table(table);
        } else if (*ab) {
            ExperimentConfig cfg = resolve_config(ab_a);
            if (data_dir.empty()) data_dir = cfg.data_dir;
            if (!variant.empty() && !is_known_variant(variant))
                throw std::runtime_error("unknown ablation variant '" + variant + "'");
            open_run_dir(ab_a.out, cfg, ab_a);
            AblationReport report =
                run_ablation(cfg, data_dir, denoiser_ckpt, ab_a.out, variant);
            std::ofstream f(ab_a.out + "/ablation.tsv");
            f << format_ablation(report);
            std::cout << format_ablation(report);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
