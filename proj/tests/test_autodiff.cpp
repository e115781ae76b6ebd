// SPDX-License-Identifier: Apache-2.0
// Central finite differences against every tape op's analytic backward.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "diffmatte/graph.hpp"
#include "diffmatte/nn.hpp"

using namespace diffmatte;

namespace {

// Analytic gradient of the graph w.r.t. p, then central differences at every
// coordinate. loss_fn must rebuild the computation from current values.
void fd_check(Parameter& p, const std::function<double()>& loss_fn,
              const std::function<Var(Tape&)>& graph_fn, double h = 1e-3, double tol = 2e-2) {
    p.zero_grad();  // earlier checks may have left residue on shared modules
    Tape tape(true);
    Var loss = graph_fn(tape);
    tape.backward(loss);
    Tensor analytic = p.grad;
    p.zero_grad();

    for (int i = 0; i < p.value.size(); i++) {
        const float orig = p.value.v[i];
        p.value.v[i] = static_cast<float>(orig + h);
        const double lp = loss_fn();
        p.value.v[i] = static_cast<float>(orig - h);
        const double lm = loss_fn();
        p.value.v[i] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double ad = analytic.v[i];
        const double err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-2});
        INFO("param ", p.name, " index ", i, " fd ", fd, " ad ", ad);
        CHECK(err < tol);
    }
}

}  // namespace

TEST_CASE("conv2d gradients") {
    Rng rng(10);
    Conv2dLayer conv("conv", 2, 3, 3, 1, 1, rng);
    Parameter input("x", rng.normal_map(2, 6, 6));
    Tensor target = rng.normal_map(3, 6, 6);
    auto graph = [&](Tape& t) {
        return t.mse_against(conv.forward(t, t.param(input)), target);
    };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(
            t.conv2d(t.constant(input.value), t.constant(conv.w.value),
                     t.constant(conv.b.value), 1, 1),
            target));
    };
    fd_check(input, loss, graph);
    fd_check(conv.w, loss, graph);
    fd_check(conv.b, loss, graph);
}

TEST_CASE("strided conv2d gradients") {
    Rng rng(11);
    Conv2dLayer conv("conv", 2, 2, 3, 2, 1, rng);
    Parameter input("x", rng.normal_map(2, 8, 8));
    Tensor target = rng.normal_map(2, 4, 4);
    auto graph = [&](Tape& t) {
        return t.mse_against(conv.forward(t, t.param(input)), target);
    };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(
            t.conv2d(t.constant(input.value), t.constant(conv.w.value),
                     t.constant(conv.b.value), 2, 1),
            target));
    };
    fd_check(input, loss, graph);
    fd_check(conv.w, loss, graph);
}

TEST_CASE("group_norm gradients") {
    Rng rng(12);
    GroupNormLayer gn("gn", 4);
    for (auto& v : gn.gamma.value.v) v = static_cast<float>(rng.uniform(0.5, 1.5));
    for (auto& v : gn.beta.value.v) v = static_cast<float>(rng.normal());
    Parameter input("x", rng.normal_map(4, 5, 5));
    Tensor target = rng.normal_map(4, 5, 5);
    auto graph = [&](Tape& t) { return t.mse_against(gn.forward(t, t.param(input)), target); };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(
            t.group_norm(t.constant(input.value), t.constant(gn.gamma.value),
                         t.constant(gn.beta.value), gn.groups),
            target));
    };
    fd_check(input, loss, graph);
    fd_check(gn.gamma, loss, graph);
    fd_check(gn.beta, loss, graph);
}

TEST_CASE("silu, affine, axpby, mul gradients") {
    Rng rng(13);
    Parameter a("a", rng.normal_map(1, 4, 4));
    Parameter b("b", rng.normal_map(1, 4, 4));
    Tensor target = rng.normal_map(1, 4, 4);
    auto graph = [&](Tape& t) {
        Var va = t.param(a), vb = t.param(b);
        Var x = t.mul(t.silu(va), t.affine(vb, 1.3, -0.2));
        Var y = t.axpby(0.7, x, -0.4, va);
        return t.mse_against(y, target);
    };
    auto loss = [&]() {
        Tape t(false);
        Var va = t.constant(a.value), vb = t.constant(b.value);
        Var x = t.mul(t.silu(va), t.affine(vb, 1.3, -0.2));
        Var y = t.axpby(0.7, x, -0.4, va);
        return t.scalar(t.mse_against(y, target));
    };
    fd_check(a, loss, graph);
    fd_check(b, loss, graph);
}

TEST_CASE("resampling, concat and channel bias gradients") {
    Rng rng(14);
    Parameter a("a", rng.normal_map(2, 4, 4));
    Parameter bias("bias", rng.normal_map(4, 1, 1));
    Tensor target = rng.normal_map(4, 4, 4);
    auto build = [&](Tape& t, Var va, Var vb) {
        Var up = t.upsample_nearest2x(va);      // 2 x 8 x 8
        Var down = t.avgpool2x(up);             // 2 x 4 x 4
        Var cat = t.concat_channels(down, va);  // 4 x 4 x 4
        return t.mse_against(t.add_channel_bias(cat, vb), target);
    };
    auto graph = [&](Tape& t) { return build(t, t.param(a), t.param(bias)); };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(build(t, t.constant(a.value), t.constant(bias.value)));
    };
    fd_check(a, loss, graph);
    fd_check(bias, loss, graph);
}

TEST_CASE("linear gradients") {
    Rng rng(15);
    LinearLayer lin("lin", 6, 3, rng);
    Parameter input("x", rng.normal_map(6, 1, 1));
    Tensor target = rng.normal_map(3, 1, 1);
    auto graph = [&](Tape& t) { return t.mse_against(lin.forward(t, t.param(input)), target); };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(
            t.linear(t.constant(input.value), t.constant(lin.w.value),
                     t.constant(lin.b.value)),
            target));
    };
    fd_check(input, loss, graph);
    fd_check(lin.w, loss, graph);
    fd_check(lin.b, loss, graph);
}

TEST_CASE("masked blend gradient only flows through unmasked pixels") {
    Rng rng(16);
    Parameter a("a", rng.normal_map(1, 4, 4));
    Tensor other = rng.normal_map(1, 4, 4);
    Tensor mask(1, 4, 4);
    for (int i = 0; i < mask.size(); i++) mask.v[i] = i % 2 ? 1.0f : 0.0f;
    Tensor target = rng.normal_map(1, 4, 4);
    auto graph = [&](Tape& t) {
        return t.mse_against(t.masked_blend(t.param(a), other, mask), target);
    };
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(t.masked_blend(t.constant(a.value), other, mask), target));
    };
    fd_check(a, loss, graph);
    // masked entries must receive zero gradient exactly
    Tape t(true);
    Var l = graph(t);
    t.backward(l);
    for (int i = 0; i < mask.size(); i++)
        if (mask.v[i] != 0.0f) CHECK(a.grad.v[i] == 0.0f);
    a.zero_grad();
}

TEST_CASE("l1 and composition losses") {
    Rng rng(17);
    Parameter a("alpha", Tensor(1, 4, 4));
    // keep values away from the |.| kink so central differences are clean
    for (auto& v : a.value.v) v = static_cast<float>(rng.uniform(0.1, 0.4));
    Tensor target(1, 4, 4);
    for (auto& v : target.v) v = static_cast<float>(rng.uniform(0.6, 0.9));
    Tensor img = rng.normal_map(3, 4, 4);
    Tensor fg = Tensor::full(3, 4, 4, 0.9f);
    Tensor bg = Tensor::full(3, 4, 4, 0.1f);
    auto graph = [&](Tape& t) {
        Var va = t.param(a);
        return t.weighted_sum({t.l1_against(va, target), t.composition_l1(va, img, fg, bg)},
                              {1.0, 0.7});
    };
    auto loss = [&]() {
        Tape t(false);
        Var va = t.constant(a.value);
        return t.scalar(t.weighted_sum(
            {t.l1_against(va, target), t.composition_l1(va, img, fg, bg)}, {1.0, 0.7}));
    };
    fd_check(a, loss, graph, 5e-4);
}

TEST_CASE("frozen parameters receive no gradient but pass input gradients") {
    Rng rng(18);
    Conv2dLayer conv("conv", 1, 1, 3, 1, 1, rng);
    Parameter input("x", rng.normal_map(1, 4, 4));
    Tensor target = rng.normal_map(1, 4, 4);
    Tape t(true);
    Var vx = t.param(input);
    Var y;
    {
        Tape::FreezeScope freeze(t);
        y = conv.forward(t, vx);
    }
    t.backward(t.mse_against(y, target));
    for (float g : conv.w.grad.v) CHECK(g == 0.0f);
    double input_grad_norm = 0.0;
    for (float g : input.grad.v) input_grad_norm += std::abs(g);
    CHECK(input_grad_norm > 0.0);
}

TEST_CASE("tiny U-Net end-to-end gradient check") {
    Rng rng(19);
    UNetConfig cfg;
    cfg.in_channels = 1;
    cfg.out_channels = 1;
    cfg.base_width = 4;
    cfg.depth = 2;
    cfg.time_embed_dim = 8;
    UNet net("net", cfg, rng);
    Tensor input = rng.normal_map(1, 8, 8);
    Tensor target = rng.normal_map(1, 8, 8);
    auto loss = [&]() {
        Tape t(false);
        return t.scalar(t.mse_against(net.forward(t, t.constant(input), 17), target));
    };
    Tape t0(true);
    t0.backward(t0.mse_against(net.forward(t0, t0.constant(input), 17), target));
    auto params = net.parameters();
    // spot-check a handful of parameters across the depth of the network,
    // at each one's strongest coordinate for conditioning
    for (size_t pi = 0; pi < params.size(); pi += 7) {
        Parameter& p = *params[pi];
        int best = 0;
        for (int i = 0; i < p.grad.size(); i++)
            if (std::abs(p.grad.v[i]) > std::abs(p.grad.v[best])) best = i;
        const double ad = p.grad.v[best];
        const double h = 2e-3;
        const float orig = p.value.v[best];
        p.value.v[best] = static_cast<float>(orig + h);
        const double lp = loss();
        p.value.v[best] = static_cast<float>(orig - h);
        const double lm = loss();
        p.value.v[best] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        // the 1e-2 floor absorbs float forward-pass noise on near-zero grads
        const double err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-2});
        INFO("param ", p.name, " fd ", fd, " ad ", ad);
        CHECK(err < 2e-2);
    }
    for (auto* p : params) p->zero_grad();
}
