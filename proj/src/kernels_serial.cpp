// SPDX-License-Identifier: Apache-2.0
// Naive single-thread reference kernels. Ground truth for the OpenMP/GEMM
// versions in kernels.cpp; also the baseline side of the kernel benchmark.
#include "diffmatte/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace diffmatte::kernels::serial {

namespace {
inline int sym_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<float>& bias,
              int stride, int pad) {
    const int kw = weight.w;
    const int kh = weight.h / x.c;
    const int oh = (x.h + 2 * pad - kh) / stride + 1;
    const int ow = (x.w + 2 * pad - kw) / stride + 1;
    Tensor y(weight.c, oh, ow);
    for (int co = 0; co < weight.c; co++) {
        for (int oy = 0; oy < oh; oy++) {
            for (int ox = 0; ox < ow; ox++) {
                double acc = bias.empty() ? 0.0 : bias[co];
                for (int ci = 0; ci < x.c; ci++) {
                    for (int ky = 0; ky < kh; ky++) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int kx = 0; kx < kw; kx++) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= x.w) continue;
                            acc += static_cast<double>(x.at(ci, iy, ix)) *
                                   weight.at(co, ci * kh + ky, kx);
                        }
                    }
                }
                y.at(co, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const ConvDims& d) {
    Tensor dx(d.in_c, d.in_h, d.in_w);
    for (int co = 0; co < d.out_c; co++)
        for (int oy = 0; oy < d.out_h(); oy++)
            for (int ox = 0; ox < d.out_w(); ox++) {
                const float g = dy.at(co, oy, ox);
                for (int ci = 0; ci < d.in_c; ci++)
                    for (int ky = 0; ky < d.kh; ky++) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.in_h) continue;
                        for (int kx = 0; kx < d.kw; kx++) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.in_w) continue;
                            dx.at(ci, iy, ix) += g * weight.at(co, ci * d.kh + ky, kx);
                        }
                    }
            }
    return dx;
}

Tensor conv2d_backward_weight(const Tensor& dy, const Tensor& x, const ConvDims& d) {
    Tensor dw(d.out_c, d.in_c * d.kh, d.kw);
    for (int co = 0; co < d.out_c; co++)
        for (int oy = 0; oy < d.out_h(); oy++)
            for (int ox = 0; ox < d.out_w(); ox++) {
                const float g = dy.at(co, oy, ox);
                for (int ci = 0; ci < d.in_c; ci++)
                    for (int ky = 0; ky < d.kh; ky++) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.in_h) continue;
                        for (int kx = 0; kx < d.kw; kx++) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.in_w) continue;
                            dw.at(co, ci * d.kh + ky, kx) += g * x.at(ci, iy, ix);
                        }
                    }
            }
    return dw;
}

Tensor group_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta, int groups, float eps) {
    const int cpg = x.c / groups;
    const int plane = x.h * x.w;
    Tensor y(x.c, x.h, x.w);
    for (int g = 0; g < groups; g++) {
        double sum = 0.0;
        for (int cc = 0; cc < cpg; cc++)
            for (int i = 0; i < plane; i++) sum += x.channel(g * cpg + cc)[i];
        const double n = static_cast<double>(cpg) * plane;
        const double mean = sum / n;
        double var = 0.0;
        for (int cc = 0; cc < cpg; cc++)
            for (int i = 0; i < plane; i++) {
                const double dv = x.channel(g * cpg + cc)[i] - mean;
                var += dv * dv;
            }
        var /= n;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (int cc = 0; cc < cpg; cc++) {
            const int ci = g * cpg + cc;
            for (int i = 0; i < plane; i++)
                y.channel(ci)[i] = static_cast<float>(
                    gamma[ci] * (x.channel(ci)[i] - mean) * inv_std + beta[ci]);
        }
    }
    return y;
}

Tensor silu(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    for (int i = 0; i < x.size(); i++)
        y.v[i] = static_cast<float>(x.v[i] / (1.0 + std::exp(-static_cast<double>(x.v[i]))));
    return y;
}

Tensor upsample_nearest2x(const Tensor& x) {
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int ci = 0; ci < x.c; ci++)
        for (int yy = 0; yy < y.h; yy++)
            for (int xx = 0; xx < y.w; xx++) y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
    return y;
}

Tensor avgpool2x(const Tensor& x) {
    Tensor y(x.c, x.h / 2, x.w / 2);
    for (int ci = 0; ci < x.c; ci++)
        for (int yy = 0; yy < y.h; yy++)
            for (int xx = 0; xx < y.w; xx++)
                y.at(ci, yy, xx) =
                    0.25f * (x.at(ci, 2 * yy, 2 * xx) + x.at(ci, 2 * yy, 2 * xx + 1) +
                             x.at(ci, 2 * yy + 1, 2 * xx) + x.at(ci, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Tensor filter_separable(const Tensor& x, const std::vector<double>& kx,
                        const std::vector<double>& ky) {
    const int rx = static_cast<int>(kx.size()) / 2;
    const int ry = static_cast<int>(ky.size()) / 2;
    Tensor tmp(x.c, x.h, x.w), y(x.c, x.h, x.w);
    for (int ci = 0; ci < x.c; ci++) {
        for (int yy = 0; yy < x.h; yy++)
            for (int xx = 0; xx < x.w; xx++) {
                double acc = 0.0;
                for (int k = -rx; k <= rx; k++)
                    acc += kx[k + rx] * x.at(ci, yy, sym_index(xx + k, x.w));
                tmp.at(ci, yy, xx) = static_cast<float>(acc);
            }
        for (int yy = 0; yy < x.h; yy++)
            for (int xx = 0; xx < x.w; xx++) {
                double acc = 0.0;
                for (int k = -ry; k <= ry; k++)
                    acc += ky[k + ry] * tmp.at(ci, sym_index(yy + k, x.h), xx);
                y.at(ci, yy, xx) = static_cast<float>(acc);
            }
    }
    return y;
}

Tensor dilate_square(const Tensor& mask, int radius) {
    if (radius <= 0) return mask;
    Tensor out(mask.c, mask.h, mask.w);
    for (int ci = 0; ci < mask.c; ci++)
        for (int yy = 0; yy < mask.h; yy++)
            for (int xx = 0; xx < mask.w; xx++) {
                float m = 0.0f;
                for (int dy = -radius; dy <= radius && m == 0.0f; dy++)
                    for (int dx = -radius; dx <= radius; dx++) {
                        const int y2 = yy + dy, x2 = xx + dx;
                        if (y2 >= 0 && y2 < mask.h && x2 >= 0 && x2 < mask.w &&
                            mask.at(ci, y2, x2) != 0.0f) {
                            m = 1.0f;
                            break;
                        }
                    }
                out.at(ci, yy, xx) = m;
            }
    return out;
}

}  // namespace diffmatte::kernels::serial
