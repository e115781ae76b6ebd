// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffmatte {

/// Dense CHW float map. Channel-major, row-major within a channel.
/// Single-channel maps (alphas, trimaps, latents) use c == 1.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, float fill = 0.0f)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.c, t.h, t.w); }
    static Tensor full(int c, int h, int w, float value) { return Tensor(c, h, w, value); }

    int size() const { return c * h * w; }
    bool empty() const { return v.empty(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
    std::string shape_str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }

    float& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    float at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

    float* data() { return v.data(); }
    const float* data() const { return v.data(); }
    float* channel(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
    const float* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }

    bool all_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

/// Deterministic RNG used everywhere. Wraps a fixed-algorithm engine and
/// explicit uniform/normal transforms so streams are reproducible bit-for-bit
/// across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ULL)) {
        // warm up so nearby seeds decorrelate
        for (int i = 0; i < 4; i++) next_u64();
    }

    uint64_t next_u64() {
        // xorshift64*; state is never zero by construction
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    /// Standard normal via Box-Muller (pair cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    Tensor normal_map(int c, int h, int w) {
        Tensor t(c, h, w);
        for (auto& x : t.v) x = static_cast<float>(normal());
        return t;
    }

    /// Derive an independent stream (per-sample seeds etc.).
    Rng fork(uint64_t stream) { return Rng(splitmix(state_ ^ splitmix(stream))); }

    static uint64_t splitmix(uint64_t x) {
        x += 0x9E3779B97f4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return (x ^ (x >> 31)) | 1ULL;
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace diffmatte
