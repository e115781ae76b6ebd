// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffmatte/tensor.hpp"

namespace diffmatte::kernels {

// Production kernels: OpenMP-parallel loops, conv backed by im2col + GEMM.
// Each has a naive serial twin in kernels::serial used as the reference
// implementation in tests and in the kernel benchmark.

struct ConvDims {
    int in_c, in_h, in_w;
    int out_c, kh, kw;
    int stride, pad;
    int out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

// weight layout: (out_c, in_c, kh, kw); bias length out_c (may be empty)
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<float>& bias,
              int stride, int pad);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const ConvDims& d);
Tensor conv2d_backward_weight(const Tensor& dy, const Tensor& x, const ConvDims& d);
std::vector<float> conv2d_backward_bias(const Tensor& dy);

struct GroupNormStats {
    std::vector<float> mean, inv_std;  // one entry per group
};
Tensor group_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta, int groups, float eps,
                  GroupNormStats* stats_out = nullptr);
void group_norm_backward(const Tensor& dy, const Tensor& x, const std::vector<float>& gamma,
                         int groups, const GroupNormStats& stats, Tensor& dx,
                         std::vector<float>& dgamma, std::vector<float>& dbeta);

Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& dy, const Tensor& x);

Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& dy);
Tensor avgpool2x(const Tensor& x);
Tensor avgpool2x_backward(const Tensor& dy);

/// 1-D convolution along rows (horizontal) then columns with symmetric
/// (reflect-including-edge) padding; kernel is centered, odd length.
Tensor filter_separable(const Tensor& x, const std::vector<double>& kx,
                        const std::vector<double>& ky);

/// Gaussian blur, sigma in pixels (sigma <= 0 returns a copy).
Tensor gaussian_blur(const Tensor& x, double sigma);
std::vector<double> gaussian_kernel(double sigma);
std::vector<double> gaussian_deriv_kernel(double sigma);

/// Binary dilation of {mask != 0} with a (2r+1)^2 square structuring element.
Tensor dilate_square(const Tensor& mask, int radius);

namespace serial {
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<float>& bias,
              int stride, int pad);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const ConvDims& d);
Tensor conv2d_backward_weight(const Tensor& dy, const Tensor& x, const ConvDims& d);
Tensor group_norm(const Tensor& x, const std::vector<float>& gamma,
                  const std::vector<float>& beta, int groups, float eps);
Tensor silu(const Tensor& x);
Tensor upsample_nearest2x(const Tensor& x);
Tensor avgpool2x(const Tensor& x);
Tensor filter_separable(const Tensor& x, const std::vector<double>& kx,
                        const std::vector<double>& ky);
Tensor dilate_square(const Tensor& mask, int radius);
}  // namespace serial

}  // namespace diffmatte::kernels
