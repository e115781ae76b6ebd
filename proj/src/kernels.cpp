// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/kernels.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>

namespace diffmatte::kernels {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatF>;
using CMapM = Eigen::Map<const MatF>;

namespace {

// grow-only scratch for the unrolled patch matrix; avoids per-call churn
float* cols_scratch(size_t n) {
    thread_local std::vector<float> buf;
    if (buf.size() < n) buf.resize(n);
    return buf.data();
}

// cols: (in_c*kh*kw) x (out_h*out_w), written into scratch
float* im2col(const Tensor& x, const ConvDims& d) {
    const int oh = d.out_h(), ow = d.out_w();
    float* cols = cols_scratch(static_cast<size_t>(d.in_c) * d.kh * d.kw * oh * ow);
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < d.in_c; ci++) {
        for (int ky = 0; ky < d.kh; ky++) {
            for (int kx = 0; kx < d.kw; kx++) {
                const int row = (ci * d.kh + ky) * d.kw + kx;
                float* dst = cols + static_cast<size_t>(row) * oh * ow;
                const float* src = x.channel(ci);
                for (int oy = 0; oy < oh; oy++) {
                    const int iy = oy * d.stride + ky - d.pad;
                    float* drow = dst + static_cast<size_t>(oy) * ow;
                    if (iy < 0 || iy >= d.in_h) {
                        std::fill(drow, drow + ow, 0.0f);
                        continue;
                    }
                    if (d.stride == 1) {
                        // valid ox range is contiguous: memcpy the middle
                        const int lo = std::max(0, d.pad - kx);
                        const int hi = std::min(ow, d.in_w + d.pad - kx);
                        std::fill(drow, drow + lo, 0.0f);
                        if (hi > lo)
                            std::copy(src + iy * d.in_w + lo + kx - d.pad,
                                      src + iy * d.in_w + hi + kx - d.pad, drow + lo);
                        std::fill(drow + std::max(lo, hi), drow + ow, 0.0f);
                    } else {
                        for (int ox = 0; ox < ow; ox++) {
                            const int ix = ox * d.stride + kx - d.pad;
                            drow[ox] = (ix >= 0 && ix < d.in_w) ? src[iy * d.in_w + ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
    return cols;
}

void col2im(const float* cols, const ConvDims& d, Tensor& dx) {
    const int oh = d.out_h(), ow = d.out_w();
    dx = Tensor(d.in_c, d.in_h, d.in_w);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < d.in_c; ci++) {
        float* dst = dx.channel(ci);
        for (int ky = 0; ky < d.kh; ky++) {
            for (int kx = 0; kx < d.kw; kx++) {
                const int row = (ci * d.kh + ky) * d.kw + kx;
                const float* src = cols + static_cast<size_t>(row) * oh * ow;
                for (int oy = 0; oy < oh; oy++) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.in_h) continue;
                    const float* srow = src + static_cast<size_t>(oy) * ow;
                    if (d.stride == 1) {
                        const int lo = std::max(0, d.pad - kx);
                        const int hi = std::min(ow, d.in_w + d.pad - kx);
                        float* drow = dst + iy * d.in_w + kx - d.pad;
                        for (int ox = lo; ox < hi; ox++) drow[ox] += srow[ox];
                    } else {
                        for (int ox = 0; ox < ow; ox++) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix >= 0 && ix < d.in_w) dst[iy * d.in_w + ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

// symmetric padding index: ...2 1 0 | 0 1 2 ... n-1 | n-1 n-2...
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
    // weight tensor shape convention: c = out_c, h = in_c*kh, w = kw
    const int kw = weight.w;
    const int kh = weight.h / x.c;
    if (weight.h % x.c != 0)
        throw std::invalid_argument("conv2d: weight/input channel mismatch");
    ConvDims d{x.c, x.h, x.w, weight.c, kh, kw, stride, pad};
    const int oh = d.out_h(), ow = d.out_w();
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");

    const float* cols = im2col(x, d);
    Tensor y(d.out_c, oh, ow);
    CMapM wmat(weight.data(), d.out_c, d.in_c * kh * kw);
    CMapM colmat(cols, d.in_c * kh * kw, oh * ow);
    MapM ymat(y.data(), d.out_c, oh * ow);
    ymat.noalias() = wmat * colmat;
    if (!bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < d.out_c; co++) {
            float* yc = y.channel(co);
            const float b = bias[co];
            for (int i = 0; i < oh * ow; i++) yc[i] += b;
        }
    }
    return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const ConvDims& d) {
    CMapM wmat(weight.data(), d.out_c, d.in_c * d.kh * d.kw);
    CMapM dymat(dy.data(), d.out_c, d.out_h() * d.out_w());
    thread_local std::vector<float> dcols_buf;
    const size_t n = static_cast<size_t>(d.in_c) * d.kh * d.kw * d.out_h() * d.out_w();
    if (dcols_buf.size() < n) dcols_buf.resize(n);
    MapM dcols(dcols_buf.data(), d.in_c * d.kh * d.kw, d.out_h() * d.out_w());
    dcols.noalias() = wmat.transpose() * dymat;
    Tensor dx;
    col2im(dcols_buf.data(), d, dx);
    return dx;
}

Tensor conv2d_backward_weight(const Tensor& dy, const Tensor& x, const ConvDims& d) {
    const float* cols = im2col(x, d);
    CMapM colmat(cols, d.in_c * d.kh * d.kw, d.out_h() * d.out_w());
    CMapM dymat(dy.data(), d.out_c, d.out_h() * d.out_w());
    Tensor dw(d.out_c, d.in_c * d.kh, d.kw);
    MapM dwmat(dw.data(), d.out_c, d.in_c * d.kh * d.kw);
    dwmat.noalias() = dymat * colmat.transpose();
    return dw;
}

std::vector<float> conv2d_backward_bias(const Tensor& dy) {
    std::vector<float> db(dy.c, 0.0f);
#pragma omp parallel for schedule(static)
    for (int co = 0; co < dy.c; co++) {
        const float* c = dy.channel(co);
        double s = 0.0;
        for (int i = 0; i < dy.h * dy.w; i++) s += c[i];
        db[co] = static_cast<float>(s);
    }
    return db;
}

Tensor group_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta, int groups, float eps,
                  GroupNormStats* stats_out) {
    if (x.c % groups != 0) throw std::invalid_argument("group_norm: channels % groups != 0");
    const int cpg = x.c / groups;
    const int plane = x.h * x.w;
    Tensor y(x.c, x.h, x.w);
    GroupNormStats st;
    st.mean.resize(groups);
    st.inv_std.resize(groups);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; g++) {
        const float* xs = x.channel(g * cpg);
        const size_t n = static_cast<size_t>(cpg) * plane;
        double sum = 0.0, sq = 0.0;
        for (size_t i = 0; i < n; i++) {
            sum += xs[i];
            sq += static_cast<double>(xs[i]) * xs[i];
        }
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
        st.mean[g] = static_cast<float>(mean);
        st.inv_std[g] = inv_std;
        for (int cc = 0; cc < cpg; cc++) {
            const int ci = g * cpg + cc;
            const float* xc = x.channel(ci);
            float* yc = y.channel(ci);
            const float a = gamma[ci] * inv_std;
            const float b = beta[ci] - static_cast<float>(mean) * a;
            for (int i = 0; i < plane; i++) yc[i] = a * xc[i] + b;
        }
    }
    if (stats_out) *stats_out = std::move(st);
    return y;
}

void group_norm_backward(const Tensor& dy, const Tensor& x, const std::vector<float>& gamma,
                         int groups, const GroupNormStats& stats, Tensor& dx,
                         std::vector<float>& dgamma, std::vector<float>& dbeta) {
    const int cpg = x.c / groups;
    const int plane = x.h * x.w;
    dx = Tensor::zeros_like(x);
    dgamma.assign(x.c, 0.0f);
    dbeta.assign(x.c, 0.0f);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < groups; g++) {
        const size_t n = static_cast<size_t>(cpg) * plane;
        const float mean = stats.mean[g];
        const float inv_std = stats.inv_std[g];
        // accumulate per-channel sums and the two group-level reductions
        double sum_dyg = 0.0;   // sum over group of dy*gamma
        double sum_dygx = 0.0;  // sum over group of dy*gamma*xhat
        for (int cc = 0; cc < cpg; cc++) {
            const int ci = g * cpg + cc;
            const float* dyc = dy.channel(ci);
            const float* xc = x.channel(ci);
            double dg = 0.0, db = 0.0;
            for (int i = 0; i < plane; i++) {
                const float xhat = (xc[i] - mean) * inv_std;
                dg += static_cast<double>(dyc[i]) * xhat;
                db += dyc[i];
                sum_dyg += static_cast<double>(dyc[i]) * gamma[ci];
                sum_dygx += static_cast<double>(dyc[i]) * gamma[ci] * xhat;
            }
            dgamma[ci] = static_cast<float>(dg);
            dbeta[ci] = static_cast<float>(db);
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int cc = 0; cc < cpg; cc++) {
            const int ci = g * cpg + cc;
            const float* dyc = dy.channel(ci);
            const float* xc = x.channel(ci);
            float* dxc = dx.channel(ci);
            for (int i = 0; i < plane; i++) {
                const double xhat = (xc[i] - mean) * inv_std;
                const double t = dyc[i] * gamma[ci] - inv_n * (sum_dyg + xhat * sum_dygx);
                dxc[i] = static_cast<float>(t * inv_std);
            }
        }
    }
}

Tensor silu(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    const int n = x.size();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; i++) {
        const float s = 1.0f / (1.0f + std::exp(-x.v[i]));
        y.v[i] = x.v[i] * s;
    }
    return y;
}

Tensor silu_backward(const Tensor& dy, const Tensor& x) {
    Tensor dx = Tensor::zeros_like(x);
    const int n = x.size();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; i++) {
        const float s = 1.0f / (1.0f + std::exp(-x.v[i]));
        dx.v[i] = dy.v[i] * s * (1.0f + x.v[i] * (1.0f - s));
    }
    return dx;
}

Tensor upsample_nearest2x(const Tensor& x) {
    Tensor y(x.c, x.h * 2, x.w * 2);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < x.c; ci++) {
        const float* src = x.channel(ci);
        float* dst = y.channel(ci);
        for (int yy = 0; yy < y.h; yy++)
            for (int xx = 0; xx < y.w; xx++)
                dst[yy * y.w + xx] = src[(yy / 2) * x.w + (xx / 2)];
    }
    return y;
}

Tensor upsample_nearest2x_backward(const Tensor& dy) {
    Tensor dx(dy.c, dy.h / 2, dy.w / 2);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < dy.c; ci++) {
        const float* src = dy.channel(ci);
        float* dst = dx.channel(ci);
        for (int yy = 0; yy < dy.h; yy++)
            for (int xx = 0; xx < dy.w; xx++)
                dst[(yy / 2) * dx.w + (xx / 2)] += src[yy * dy.w + xx];
    }
    return dx;
}

Tensor avgpool2x(const Tensor& x) {
    Tensor y(x.c, x.h / 2, x.w / 2);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < x.c; ci++) {
        const float* src = x.channel(ci);
        float* dst = y.channel(ci);
        for (int yy = 0; yy < y.h; yy++)
            for (int xx = 0; xx < y.w; xx++)
                dst[yy * y.w + xx] = 0.25f * (src[(2 * yy) * x.w + 2 * xx] +
                                              src[(2 * yy) * x.w + 2 * xx + 1] +
                                              src[(2 * yy + 1) * x.w + 2 * xx] +
                                              src[(2 * yy + 1) * x.w + 2 * xx + 1]);
    }
    return y;
}

Tensor avgpool2x_backward(const Tensor& dy) {
    Tensor dx(dy.c, dy.h * 2, dy.w * 2);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < dy.c; ci++) {
        const float* src = dy.channel(ci);
        float* dst = dx.channel(ci);
        for (int yy = 0; yy < dx.h; yy++)
            for (int xx = 0; xx < dx.w; xx++)
                dst[yy * dx.w + xx] = 0.25f * src[(yy / 2) * dy.w + (xx / 2)];
    }
    return dx;
}

Tensor filter_separable(const Tensor& x, const std::vector<double>& kx,
                        const std::vector<double>& ky) {
    const int rx = static_cast<int>(kx.size()) / 2;
    const int ry = static_cast<int>(ky.size()) / 2;
    Tensor tmp(x.c, x.h, x.w), y(x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < x.c; ci++) {
        const float* src = x.channel(ci);
        float* mid = tmp.channel(ci);
        for (int yy = 0; yy < x.h; yy++) {
            for (int xx = 0; xx < x.w; xx++) {
                double acc = 0.0;
                for (int k = -rx; k <= rx; k++)
                    acc += kx[k + rx] * src[yy * x.w + sym_index(xx + k, x.w)];
                mid[yy * x.w + xx] = static_cast<float>(acc);
            }
        }
        float* dst = y.channel(ci);
        for (int yy = 0; yy < x.h; yy++) {
            for (int xx = 0; xx < x.w; xx++) {
                double acc = 0.0;
                for (int k = -ry; k <= ry; k++)
                    acc += ky[k + ry] * mid[sym_index(yy + k, x.h) * x.w + xx];
                dst[yy * x.w + xx] = static_cast<float>(acc);
            }
        }
    }
    return y;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; i++) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (auto& x : k) x /= sum;
    return k;
}

std::vector<double> gaussian_deriv_kernel(double sigma) {
    // derivative of the gaussian, scaled by the same normalizer as the
    // smoothing kernel so the pair stays consistent
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; i++) sum += std::exp(-0.5 * i * i / (sigma * sigma));
    for (int i = -r; i <= r; i++)
        k[i + r] = -i / (sigma * sigma) * std::exp(-0.5 * i * i / (sigma * sigma)) / sum;
    return k;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
    if (sigma <= 0.0) return x;
    auto k = gaussian_kernel(sigma);
    return filter_separable(x, k, k);
}

Tensor dilate_square(const Tensor& mask, int radius) {
    if (radius <= 0) return mask;
    Tensor tmp(mask.c, mask.h, mask.w), out(mask.c, mask.h, mask.w);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < mask.c; ci++) {
        const float* src = mask.channel(ci);
        float* mid = tmp.channel(ci);
        for (int yy = 0; yy < mask.h; yy++) {
            for (int xx = 0; xx < mask.w; xx++) {
                float m = 0.0f;
                for (int k = -radius; k <= radius; k++) {
                    const int x2 = xx + k;
                    if (x2 >= 0 && x2 < mask.w && src[yy * mask.w + x2] != 0.0f) {
                        m = 1.0f;
                        break;
                    }
                }
                mid[yy * mask.w + xx] = m;
            }
        }
        float* dst = out.channel(ci);
        for (int yy = 0; yy < mask.h; yy++) {
            for (int xx = 0; xx < mask.w; xx++) {
                float m = 0.0f;
                for (int k = -radius; k <= radius; k++) {
                    const int y2 = yy + k;
                    if (y2 >= 0 && y2 < mask.h && mid[y2 * mask.w + xx] != 0.0f) {
                        m = 1.0f;
                        break;
                    }
                }
                dst[yy * mask.w + xx] = m;
            }
        }
    }
    return out;
}

}  // namespace diffmatte::kernels
