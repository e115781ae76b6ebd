// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace diffmatte {

namespace fs = std::filesystem;

std::vector<std::string> ablation_variant_names() {
    return {"full",   "wo_diffusion", "wo_arp", "T100",  "T250",    "T1000",
            "steps1", "steps3",       "steps5", "steps10", "wo_inv", "wo_alpha",
            "wo_comp", "seed_grid"};
}

bool is_known_variant(const std::string& name) {
    const auto names = ablation_variant_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

int forward_pass_count(MattingVariant variant, int steps) {
    if (variant == MattingVariant::wo_diffusion) return 2;  // encoder + correction
    return 1 + 3 * steps;  // encoder + steps*(correction+denoiser) + inversion denoiser calls
}

namespace {

struct VariantSetup {
    ExperimentConfig cfg;
    MattingVariant kind = MattingVariant::full;
};

VariantSetup setup_variant(const ExperimentConfig& base, const std::string& variant) {
    VariantSetup v;
    v.cfg = base;
    if (variant == "full" || variant == "T250" || variant == "steps5") {
        // the default operating point
    } else if (variant == "wo_diffusion") {
        v.kind = MattingVariant::wo_diffusion;
    } else if (variant == "wo_arp") {
        v.kind = MattingVariant::wo_arp;
    } else if (variant == "T100") {
        v.cfg.T = 100;
        v.cfg.steps = std::min(v.cfg.steps, v.cfg.T);
    } else if (variant == "T1000") {
        // full-perturbation end of the sweep; the last valid index of a
        // 1000-step schedule
        v.cfg.T = v.cfg.num_train_steps - 1;
    } else if (variant == "steps1") {
        v.cfg.steps = 1;
    } else if (variant == "steps3") {
        v.cfg.steps = 3;
    } else if (variant == "steps10") {
        v.cfg.steps = 10;
    } else if (variant == "wo_inv") {
        v.cfg.lambda_inv = 0.0;
    } else if (variant == "wo_alpha") {
        v.cfg.lambda_alpha = 0.0;
    } else if (variant == "wo_comp") {
        v.cfg.lambda_comp = 0.0;
    } else {
        throw std::invalid_argument("unknown ablation variant '" + variant + "'");
    }
    return v;
}

}  // namespace

AblationRow run_ablation_variant(const ExperimentConfig& base, const std::string& data_root,
                                 const std::string& denoiser_ckpt, const std::string& work_dir,
                                 const std::string& variant) {
    VariantSetup v = setup_variant(base, variant);
    const std::string dir = work_dir + "/" + variant;
    fs::create_directories(dir);
    MattingTrainResult tr = train_matting(v.cfg, data_root, denoiser_ckpt, dir, v.kind);
    MattingRuntime rt = load_matting_runtime(denoiser_ckpt, tr.ckpt_path);
    run_inference_dir(rt, data_root + "/test", dir + "/pred", v.cfg.seed, false);
    EvalTable table = evaluate_dataset(dir + "/pred", data_root + "/test");
    AblationRow row;
    row.variant = variant;
    row.mse = table.mean.mse;
    row.sad = table.mean.sad;
    row.grad = table.mean.grad;
    row.conn = table.mean.conn;
    row.forward_passes = forward_pass_count(v.kind, v.cfg.steps);
    return row;
}

std::vector<AblationReport::SeedGridRow> run_seed_grid(const ExperimentConfig& base,
                                                       const std::string& data_root,
                                                       const std::string& denoiser_ckpt,
                                                       const std::string& work_dir,
                                                       int train_seeds, int infer_seeds) {
    std::vector<AblationReport::SeedGridRow> rows;
    auto test = load_split(data_root, "test");
    for (int ts = 0; ts < train_seeds; ts++) {
        ExperimentConfig cfg = base;
        cfg.seed = base.seed + 1000 + ts;
        const std::string dir = work_dir + "/seed_grid/train" + std::to_string(ts);
        fs::create_directories(dir);
        MattingTrainResult tr = train_matting(cfg, data_root, denoiser_ckpt, dir);
        MattingRuntime rt = load_matting_runtime(denoiser_ckpt, tr.ckpt_path);

        std::vector<double> mses;
        for (int is = 0; is < infer_seeds; is++) {
            double acc = 0.0;
            for (const auto& sample : test) {
                Tensor pred = infer_matte(rt, sample.image, sample.trimap,
                                          sample_noise_seed(cfg.seed * 131 + is, sample.id));
                Tensor mask = Tensor::zeros_like(sample.alpha);
                for (int i = 0; i < mask.size(); i++)
                    mask.v[i] = sample.trimap.values.v[i] == 0.5f ? 1.0f : 0.0f;
                acc += mse(pred, sample.alpha, mask);
            }
            mses.push_back(acc / test.size());
        }
        double mean = 0.0;
        for (double m : mses) mean += m;
        mean /= mses.size();
        double var = 0.0;
        for (double m : mses) var += (m - mean) * (m - mean);
        var /= mses.size();
        rows.push_back({cfg.seed, mean, std::sqrt(var)});
    }
    return rows;
}

AblationReport run_ablation(const ExperimentConfig& base, const std::string& data_root,
                            const std::string& denoiser_ckpt, const std::string& work_dir,
                            const std::string& only_variant) {
    if (!only_variant.empty() && !is_known_variant(only_variant))
        throw std::invalid_argument("unknown ablation variant '" + only_variant + "'");
    AblationReport report;
    for (const auto& name : ablation_variant_names()) {
        if (!only_variant.empty() && name != only_variant) continue;
        if (name == "seed_grid") {
            report.seed_grid =
                run_seed_grid(base, data_root, denoiser_ckpt, work_dir, 5, 10);
            continue;
        }
        report.rows.push_back(
            run_ablation_variant(base, data_root, denoiser_ckpt, work_dir, name));
    }
    return report;
}

std::string format_ablation(const AblationReport& report) {
    std::ostringstream os;
    os.precision(9);
    os << "variant\tmse\tsad\tgrad\tconn\tforward_passes\n";
    for (const auto& r : report.rows)
        os << r.variant << "\t" << r.mse << "\t" << r.sad << "\t" << r.grad << "\t" << r.conn
           << "\t" << r.forward_passes << "\n";
    if (!report.seed_grid.empty()) {
        os << "train_seed\tmse_mean\tmse_std\n";
        for (const auto& r : report.seed_grid)
            os << r.train_seed << "\t" << r.mse_mean << "\t" << r.mse_std << "\n";
    }
    return os.str();
}

}  // namespace diffmatte
