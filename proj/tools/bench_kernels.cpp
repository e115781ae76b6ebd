// SPDX-License-Identifier: Apache-2.0
// Timings of the production kernels against their serial references.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "diffmatte/kernels.hpp"
#include "diffmatte/tensor.hpp"

using namespace diffmatte;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; i++) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
    std::printf("omp max threads: %d\n", omp_get_max_threads());
    Rng rng(42);

    {
        Tensor x = rng.normal_map(32, 64, 64);
        Tensor w = rng.normal_map(32, 32 * 3, 3);
        std::vector<float> b(32, 0.1f);
        volatile float sink = 0;
        const double s = time_ms([&] { sink += kernels::serial::conv2d(x, w, b, 1, 1).v[0]; }, 3);
        const double p = time_ms([&] { sink += kernels::conv2d(x, w, b, 1, 1).v[0]; }, 20);
        report("conv2d 32x64x64 k3", s, p);
    }
    {
        Tensor dy = rng.normal_map(32, 64, 64);
        Tensor x = rng.normal_map(32, 64, 64);
        Tensor w = rng.normal_map(32, 32 * 3, 3);
        kernels::ConvDims d{32, 64, 64, 32, 3, 3, 1, 1};
        volatile float sink = 0;
        const double s =
            time_ms([&] { sink += kernels::serial::conv2d_backward_input(dy, w, d).v[0]; }, 3);
        const double p =
            time_ms([&] { sink += kernels::conv2d_backward_input(dy, w, d).v[0]; }, 20);
        report("conv2d bwd input", s, p);
        const double sw =
            time_ms([&] { sink += kernels::serial::conv2d_backward_weight(dy, x, d).v[0]; }, 3);
        const double pw =
            time_ms([&] { sink += kernels::conv2d_backward_weight(dy, x, d).v[0]; }, 20);
        report("conv2d bwd weight", sw, pw);
    }
    {
        Tensor x = rng.normal_map(64, 64, 64);
        std::vector<float> gamma(64, 1.0f), beta(64, 0.0f);
        volatile float sink = 0;
        const double s =
            time_ms([&] { sink += kernels::serial::group_norm(x, gamma, beta, 8, 1e-5f).v[0]; }, 10);
        const double p =
            time_ms([&] { sink += kernels::group_norm(x, gamma, beta, 8, 1e-5f).v[0]; }, 50);
        report("group_norm 64x64x64", s, p);
    }
    {
        Tensor x = rng.normal_map(64, 64, 64);
        volatile float sink = 0;
        const double s = time_ms([&] { sink += kernels::serial::silu(x).v[0]; }, 10);
        const double p = time_ms([&] { sink += kernels::silu(x).v[0]; }, 50);
        report("silu 64x64x64", s, p);
    }
    {
        Tensor x = rng.normal_map(1, 256, 256);
        auto k = kernels::gaussian_kernel(1.4);
        volatile float sink = 0;
        const double s = time_ms([&] { sink += kernels::serial::filter_separable(x, k, k).v[0]; }, 5);
        const double p = time_ms([&] { sink += kernels::filter_separable(x, k, k).v[0]; }, 20);
        report("gaussian blur 256x256", s, p);
    }
    {
        Tensor m(1, 256, 256);
        Rng r2(7);
        for (auto& v : m.v) v = r2.uniform() < 0.02 ? 1.0f : 0.0f;
        volatile float sink = 0;
        const double s = time_ms([&] { sink += kernels::serial::dilate_square(m, 3).v[0]; }, 5);
        const double p = time_ms([&] { sink += kernels::dilate_square(m, 3).v[0]; }, 20);
        report("dilate r3 256x256", s, p);
    }
    return 0;
}
