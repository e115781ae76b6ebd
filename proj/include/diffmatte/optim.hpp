// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "diffmatte/graph.hpp"

namespace diffmatte {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
};

/// Adaptive moment estimation over a fixed parameter set.
class Adam {
public:
    Adam(std::vector<Parameter*> params, const AdamConfig& cfg);

    /// One update from accumulated gradients, then zeroes them.
    void step();
    void zero_grad();
    double last_grad_norm() const { return last_grad_norm_; }
    int64_t step_count() const { return t_; }

    // state round-trip for checkpointing (keyed by parameter name)
    std::map<std::string, Tensor> export_state() const;
    void import_state(const std::map<std::string, Tensor>& state, int64_t step_count);

private:
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
    double last_grad_norm_ = 0.0;
};

/// Exponential moving average of a parameter set.
class EmaWeights {
public:
    EmaWeights() = default;
    EmaWeights(std::vector<Parameter*> params, double decay);

    void update();
    /// Copies the averaged weights into the tracked parameters.
    void copy_to_params();
    const std::vector<Tensor>& shadow() const { return shadow_; }
    void set_shadow(std::vector<Tensor> s) { shadow_ = std::move(s); }
    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    double decay_ = 0.999;
    std::vector<Tensor> shadow_;
};

}  // namespace diffmatte
