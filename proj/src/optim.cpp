// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace diffmatte {

Adam::Adam(std::vector<Parameter*> params, const AdamConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void Adam::step() {
    double norm_sq = 0.0;
    for (auto* p : params_)
        for (float g : p->grad.v) norm_sq += static_cast<double>(g) * g;
    last_grad_norm_ = std::sqrt(norm_sq);
    double scale = 1.0;
    if (cfg_.grad_clip > 0.0 && last_grad_norm_ > cfg_.grad_clip)
        scale = cfg_.grad_clip / last_grad_norm_;

    t_++;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); i++) {
        Parameter& p = *params_[i];
        float* m = m_[i].data();
        float* v = v_[i].data();
        for (int k = 0; k < p.value.size(); k++) {
            const double g = p.grad.v[k] * scale;
            m[k] = static_cast<float>(cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g);
            v[k] = static_cast<float>(cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g);
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.value.v[k] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

std::map<std::string, Tensor> Adam::export_state() const {
    std::map<std::string, Tensor> st;
    for (size_t i = 0; i < params_.size(); i++) {
        st["adam.m." + params_[i]->name] = m_[i];
        st["adam.v." + params_[i]->name] = v_[i];
    }
    return st;
}

void Adam::import_state(const std::map<std::string, Tensor>& state, int64_t step_count) {
    for (size_t i = 0; i < params_.size(); i++) {
        auto mi = state.find("adam.m." + params_[i]->name);
        auto vi = state.find("adam.v." + params_[i]->name);
        if (mi == state.end() || vi == state.end())
            throw std::runtime_error("optimizer state missing for " + params_[i]->name);
        m_[i] = mi->second;
        v_[i] = vi->second;
    }
    t_ = step_count;
}

EmaWeights::EmaWeights(std::vector<Parameter*> params, double decay)
    : params_(std::move(params)), decay_(decay) {
    for (auto* p : params_) shadow_.push_back(p->value);
}

void EmaWeights::update() {
    for (size_t i = 0; i < params_.size(); i++) {
        float* s = shadow_[i].data();
        const float* w = params_[i]->value.data();
        for (int k = 0; k < shadow_[i].size(); k++)
            s[k] = static_cast<float>(decay_ * s[k] + (1.0 - decay_) * w[k]);
    }
}

void EmaWeights::copy_to_params() {
    for (size_t i = 0; i < params_.size(); i++) params_[i]->value = shadow_[i];
}

}  // namespace diffmatte
