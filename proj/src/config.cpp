// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace diffmatte {

DenoiserConfig ExperimentConfig::denoiser_config() const {
    DenoiserConfig c;
    c.base_width = denoiser_width;
    c.depth = denoiser_depth;
    c.time_embed_dim = time_embed_dim;
    c.use_attention = use_attention;
    return c;
}

EncoderConfig ExperimentConfig::encoder_config() const {
    EncoderConfig c;
    c.feature_channels = encoder_features;
    c.depth = encoder_depth;
    return c;
}

CorrectionConfig ExperimentConfig::correction_config() const {
    CorrectionConfig c;
    c.feature_channels = encoder_features;
    c.base_width = correction_width;
    c.depth = correction_depth;
    c.time_embed_dim = time_embed_dim;
    return c;
}

SyntheticSpec ExperimentConfig::synthetic_spec() const {
    SyntheticSpec s;
    s.height = resolution;
    s.width = resolution;
    s.shapes_min = shapes_min;
    s.shapes_max = shapes_max;
    s.softness_min = softness_min;
    s.softness_max = softness_max;
    s.seed = seed;
    return s;
}

TrimapSpec ExperimentConfig::trimap_spec() const {
    return TrimapSpec{fg_threshold, bg_threshold, band_radius};
}

void ExperimentConfig::validate() const {
    const int div = 1 << std::max({denoiser_depth, encoder_depth, correction_depth});
    if (resolution % div != 0)
        throw std::invalid_argument("config: resolution " + std::to_string(resolution) +
                                    " not divisible by 2^depth = " + std::to_string(div));
    if (!(T > 0 && T < num_train_steps))
        throw std::invalid_argument("config: T must be in (0, num_train_steps)");
    if (steps < 1 || steps > T) throw std::invalid_argument("config: steps must be in [1, T]");
    if (lambda_inv < 0 || lambda_alpha < 0 || lambda_comp < 0)
        throw std::invalid_argument("config: loss weights must be non-negative");
    if (!(bg_threshold >= 0 && bg_threshold < fg_threshold && fg_threshold <= 1))
        throw std::invalid_argument("config: need 0 <= bg_threshold < fg_threshold <= 1");
    if (band_radius < 1) throw std::invalid_argument("config: band_radius must be >= 1");
    if (use_attention)
        throw std::invalid_argument("config: use_attention=true is not supported");
}

namespace {

struct FieldBinding {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
std::string to_str(const T& v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, FieldBinding>& bindings() {
    static const std::map<std::string, FieldBinding> map = [] {
        std::map<std::string, FieldBinding> m;
        auto add_u64 = [&](const std::string& k, uint64_t ExperimentConfig::* f) {
            m[k] = {[f](ExperimentConfig& c, const std::string& v) { c.*f = std::stoull(v); },
                    [f](const ExperimentConfig& c) { return to_str(c.*f); }};
        };
        auto add_int = [&](const std::string& k, int ExperimentConfig::* f) {
            m[k] = {[f](ExperimentConfig& c, const std::string& v) { c.*f = std::stoi(v); },
                    [f](const ExperimentConfig& c) { return to_str(c.*f); }};
        };
        auto add_dbl = [&](const std::string& k, double ExperimentConfig::* f) {
            m[k] = {[f](ExperimentConfig& c, const std::string& v) { c.*f = std::stod(v); },
                    [f](const ExperimentConfig& c) { return to_str(c.*f); }};
        };
        auto add_str = [&](const std::string& k, std::string ExperimentConfig::* f) {
            m[k] = {[f](ExperimentConfig& c, const std::string& v) { c.*f = v; },
                    [f](const ExperimentConfig& c) { return c.*f; }};
        };
        auto add_bool = [&](const std::string& k, bool ExperimentConfig::* f) {
            m[k] = {[f](ExperimentConfig& c, const std::string& v) {
                        if (v == "true" || v == "1")
                            c.*f = true;
                        else if (v == "false" || v == "0")
                            c.*f = false;
                        else
                            throw std::invalid_argument("config: bad boolean '" + v + "'");
                    },
                    [f](const ExperimentConfig& c) { return std::string(c.*f ? "true" : "false"); }};
        };
        add_u64("seed", &ExperimentConfig::seed);
        add_int("resolution", &ExperimentConfig::resolution);
        add_str("data_dir", &ExperimentConfig::data_dir);
        add_int("train_samples", &ExperimentConfig::train_samples);
        add_int("test_samples", &ExperimentConfig::test_samples);
        add_int("shapes_min", &ExperimentConfig::shapes_min);
        add_int("shapes_max", &ExperimentConfig::shapes_max);
        add_dbl("softness_min", &ExperimentConfig::softness_min);
        add_dbl("softness_max", &ExperimentConfig::softness_max);
        add_dbl("fg_threshold", &ExperimentConfig::fg_threshold);
        add_dbl("bg_threshold", &ExperimentConfig::bg_threshold);
        add_int("band_radius", &ExperimentConfig::band_radius);
        add_int("num_train_steps", &ExperimentConfig::num_train_steps);
        add_dbl("beta_start", &ExperimentConfig::beta_start);
        add_dbl("beta_end", &ExperimentConfig::beta_end);
        add_int("T", &ExperimentConfig::T);
        add_int("steps", &ExperimentConfig::steps);
        add_dbl("lambda_inv", &ExperimentConfig::lambda_inv);
        add_dbl("lambda_alpha", &ExperimentConfig::lambda_alpha);
        add_dbl("lambda_comp", &ExperimentConfig::lambda_comp);
        add_int("denoiser_width", &ExperimentConfig::denoiser_width);
        add_int("denoiser_depth", &ExperimentConfig::denoiser_depth);
        add_int("time_embed_dim", &ExperimentConfig::time_embed_dim);
        add_bool("use_attention", &ExperimentConfig::use_attention);
        add_int("encoder_features", &ExperimentConfig::encoder_features);
        add_int("encoder_depth", &ExperimentConfig::encoder_depth);
        add_int("correction_width", &ExperimentConfig::correction_width);
        add_int("correction_depth", &ExperimentConfig::correction_depth);
        add_dbl("lr", &ExperimentConfig::lr);
        add_dbl("ema_decay", &ExperimentConfig::ema_decay);
        add_dbl("grad_clip", &ExperimentConfig::grad_clip);
        add_int("batch_size", &ExperimentConfig::batch_size);
        add_int("diffusion_steps_budget", &ExperimentConfig::diffusion_steps_budget);
        add_int("matting_steps_budget", &ExperimentConfig::matting_steps_budget);
        add_int("val_every", &ExperimentConfig::val_every);
        add_int("log_every", &ExperimentConfig::log_every);
        add_int("sample_dump_every", &ExperimentConfig::sample_dump_every);
        return m;
    }();
    return map;
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    auto it = bindings().find(key);
    if (it == bindings().end())
        throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, bind] : bindings()) os << key << " = " << bind.get(cfg) << "\n";
    return os.str();
}

void write_config(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config: " + path);
    f << serialize_config(cfg);
}

std::map<std::string, std::string> config_map(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> m;
    for (const auto& [key, bind] : bindings()) m[key] = bind.get(cfg);
    return m;
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& m) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : m)
        if (bindings().count(key)) apply_config_line(cfg, key, value);
    return cfg;
}

}  // namespace diffmatte
