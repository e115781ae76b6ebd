// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "diffmatte/kernels.hpp"
#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// Named trainable tensor; gradients accumulate into `grad` across a tape
/// backward pass and are consumed by the optimizer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros_like(value);
    }
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0f); }
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Ops append nodes eagerly (values computed immediately);
/// backward() replays recorded closures in reverse. Constructing with
/// grad_enabled=false skips all bookkeeping, giving a plain forward evaluator.
///
/// Parameter leaves alias the external tensor rather than copying it; the
/// owning module must outlive the tape. Scalars (losses) are 1x1x1 tensors.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}

    bool grad_enabled() const { return grad_; }

    Var constant(Tensor v);
    /// Leaf tied to a Parameter: backward adds into p.grad unless the tape is
    /// inside a FreezeScope (used for the frozen denoiser).
    Var param(Parameter& p);
    const Tensor& value(Var x) const { return val_of(x.id); }
    const Tensor& grad(Var x) const;

    /// RAII scope during which param() leaves receive no weight gradient.
    /// Gradients still flow through ops into non-frozen inputs.
    struct FreezeScope {
        explicit FreezeScope(Tape& t) : tape(t) { tape.freeze_depth_++; }
        ~FreezeScope() { tape.freeze_depth_--; }
        Tape& tape;
    };

    void backward(Var scalar_loss);

    // ---- ops ----
    Var conv2d(Var x, Var w, Var b, int stride, int pad);  // b may be invalid
    Var group_norm(Var x, Var gamma, Var beta, int groups, float eps = 1e-5f);
    Var silu(Var x);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    /// alpha*a + beta*b, elementwise
    Var axpby(double alpha, Var a, double beta, Var b);
    /// alpha*x + beta, elementwise
    Var affine(Var x, double alpha, double beta);
    /// x + bias broadcast over each channel plane (bias is (c,1,1))
    Var add_channel_bias(Var x, Var bias);
    Var concat_channels(Var a, Var b);
    Var upsample_nearest2x(Var x);
    Var avgpool2x(Var x);
    /// y = W x + b for vectors stored (n,1,1); W stored (out,in,1)
    Var linear(Var x, Var w, Var b);
    /// per-pixel select: mask != 0 takes `other`, else x (exact ownership)
    Var masked_blend(Var x, const Tensor& other, const Tensor& mask);
    /// mean((x - target)^2) -> scalar
    Var mse_against(Var x, const Tensor& target);
    /// mean(|x - target|) -> scalar
    Var l1_against(Var x, const Tensor& target);
    /// mean over pixels+channels of |image - (a*fg + (1-a)*bg)|, a single-channel
    Var composition_l1(Var a, const Tensor& image, const Tensor& fg, const Tensor& bg);
    /// weighted sum of scalars
    Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& ws);

    /// Scalar value; reductions keep a double-precision side channel so loss
    /// reporting and finite-difference oracles are not float-quantized.
    double scalar(Var x) const {
        const Node& n = nodes_[x.id];
        return n.has_hi ? n.hi : static_cast<double>(val_of(x.id).v[0]);
    }
    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        const Tensor* ext = nullptr;  // parameter leaves alias external storage
        Tensor grad;
        bool needs_grad = false;
        bool has_hi = false;
        double hi = 0.0;
        Parameter* sink = nullptr;
        std::function<void(Tape&)> back;
    };

    const Tensor& val_of(int id) const {
        const Node& n = nodes_[id];
        return n.ext ? *n.ext : n.val;
    }
    int push(Tensor val, bool needs_grad);
    void ensure_grad(int id);
    void accum(int id, const Tensor& g);
    bool req(Var x) const { return nodes_[x.id].needs_grad; }

    std::vector<Node> nodes_;
    bool grad_ = true;
    int freeze_depth_ = 0;

    friend struct FreezeScope;
};

}  // namespace diffmatte
