// SPDX-License-Identifier: Apache-2.0
// Test-only reference implementations, kept independent of the library's
// computation paths: double-precision scalar diffusion formulas, a dense
// convolution gradient-magnitude oracle and a from-scratch flood-fill
// connectivity oracle.
#pragma once

#include <cmath>
#include <deque>
#include <vector>

#include "diffmatte/kernels.hpp"
#include "diffmatte/schedule.hpp"
#include "diffmatte/tensor.hpp"

namespace diffmatte::oracles {

inline double q_sample_scalar(double x0, double noise, int t, const NoiseSchedule& s) {
    return std::sqrt(s.alpha_bars[t]) * x0 + std::sqrt(1.0 - s.alpha_bars[t]) * noise;
}

inline double ddpm_scalar(double x_t, double eps, double z, int t, const NoiseSchedule& s) {
    const double beta = s.betas[t];
    return (x_t - beta / std::sqrt(1.0 - s.alpha_bars[t]) * eps) / std::sqrt(1.0 - beta) +
           std::sqrt(beta) * z;
}

struct DdimScalar {
    double next, x0_hat;
};
inline DdimScalar ddim_scalar(double x_t, double eps, int t_now, int t_next,
                              const NoiseSchedule& s) {
    const double x0 = (x_t - std::sqrt(1.0 - s.alpha_bars[t_now]) * eps) /
                      std::sqrt(s.alpha_bars[t_now]);
    return {std::sqrt(s.alpha_bars[t_next]) * x0 + std::sqrt(1.0 - s.alpha_bars[t_next]) * eps,
            x0};
}

inline int sym_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

/// Gradient error via dense 2-D convolution at every pixel, all in double.
inline double grad_error_dense(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                               double sigma) {
    const auto g = kernels::gaussian_kernel(sigma);
    const auto dg = kernels::gaussian_deriv_kernel(sigma);
    const int r = static_cast<int>(g.size()) / 2;
    auto grad_mag = [&](const Tensor& t, int y, int x) {
        double gx = 0.0, gy = 0.0;
        for (int ky = -r; ky <= r; ky++)
            for (int kx = -r; kx <= r; kx++) {
                const double v = t.at(0, sym_index(y + ky, t.h), sym_index(x + kx, t.w));
                gx += g[ky + r] * dg[kx + r] * v;
                gy += dg[ky + r] * g[kx + r] * v;
            }
        return std::hypot(gx, gy);
    };
    double acc = 0.0;
    for (int y = 0; y < pred.h; y++)
        for (int x = 0; x < pred.w; x++) {
            if (mask.at(0, y, x) == 0.0f) continue;
            const double d = grad_mag(pred, y, x) - grad_mag(gt, y, x);
            acc += d * d;
        }
    return acc;
}

/// Connectivity error recomputing every per-threshold labeling from scratch.
inline double conn_error_bruteforce(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    const int H = pred.h, W = pred.w;
    std::vector<double> thetas;
    for (double t = 0.9; t > 0.05; t -= 0.1) thetas.push_back(t);

    auto components = [&](const std::vector<char>& region) {
        std::vector<int> label(H * W, -1);
        int next = 0;
        for (int i = 0; i < H * W; i++) {
            if (!region[i] || label[i] >= 0) continue;
            std::deque<int> q{i};
            label[i] = next;
            while (!q.empty()) {
                int cur = q.front();
                q.pop_front();
                const int y = cur / W, x = cur % W;
                const int nb[4] = {cur - W, cur + W, cur - 1, cur + 1};
                const bool ok[4] = {y > 0, y < H - 1, x > 0, x < W - 1};
                for (int k = 0; k < 4; k++)
                    if (ok[k] && region[nb[k]] && label[nb[k]] < 0) {
                        label[nb[k]] = next;
                        q.push_back(nb[k]);
                    }
            }
            next++;
        }
        return std::pair(label, next);
    };

    std::vector<char> omega(H * W, 0);
    for (double theta : thetas) {
        std::vector<char> joint(H * W, 0);
        bool any = false;
        for (int i = 0; i < H * W; i++)
            if (pred.v[i] >= theta && gt.v[i] >= theta) joint[i] = 1, any = true;
        if (!any) continue;
        auto [label, n] = components(joint);
        std::vector<int> sizes(n, 0);
        for (int i = 0; i < H * W; i++)
            if (label[i] >= 0) sizes[label[i]]++;
        int best = 0;
        for (int k = 1; k < n; k++)
            if (sizes[k] > sizes[best]) best = k;
        for (int i = 0; i < H * W; i++) omega[i] = label[i] == best;
        break;
    }

    auto levels = [&](const Tensor& a) {
        std::vector<double> li(H * W, 0.0);
        for (int i = 0; i < H * W; i++) {
            for (double theta : thetas) {
                std::vector<char> region(H * W, 0);
                for (int k = 0; k < H * W; k++) region[k] = a.v[k] >= theta;
                if (!region[i]) continue;
                auto [label, n] = components(region);
                bool connected = false;
                for (int k = 0; k < H * W && !connected; k++)
                    if (omega[k] && region[k] && label[k] == label[i]) connected = true;
                if (connected) {
                    li[i] = theta;
                    break;
                }
            }
        }
        return li;
    };

    auto lp = levels(pred);
    auto lg = levels(gt);
    auto phi = [](double a, double l) {
        const double d = a - l;
        return 1.0 - (d >= 0.15 ? d : 0.0);
    };
    double acc = 0.0;
    for (int i = 0; i < H * W; i++) {
        if (mask.v[i] == 0.0f) continue;
        acc += std::abs(phi(pred.v[i], lp[i]) - phi(gt.v[i], lg[i]));
    }
    return acc;
}

}  // namespace diffmatte::oracles
