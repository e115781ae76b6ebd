// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "diffmatte/image_io.hpp"
#include "diffmatte/kernels.hpp"

namespace diffmatte {

namespace fs = std::filesystem;

namespace {

float snap16(float v) { return std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f) / 65535.0f; }
float snap8(float v) { return std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

// signed distance to a simple polygon, negative inside
double polygon_sdf(const std::vector<std::pair<double, double>>& v, double px, double py) {
    const int n = static_cast<int>(v.size());
    double d2 = 1e18;
    bool inside = false;
    for (int i = 0, j = n - 1; i < n; j = i++) {
        const double ex = v[i].first - v[j].first, ey = v[i].second - v[j].second;
        const double wx = px - v[j].first, wy = py - v[j].second;
        const double len2 = ex * ex + ey * ey;
        const double t = len2 > 0.0 ? std::clamp((wx * ex + wy * ey) / len2, 0.0, 1.0) : 0.0;
        const double dx = wx - t * ex, dy = wy - t * ey;
        d2 = std::min(d2, dx * dx + dy * dy);
        const bool c1 = v[i].second > py, c2 = v[j].second > py;
        if (c1 != c2 && px < v[j].first + (py - v[j].second) * ex / ey) inside = !inside;
    }
    return (inside ? -1.0 : 1.0) * std::sqrt(d2);
}

double capsule_sdf(double x, double y, double ax, double ay, double bx, double by, double r) {
    const double px = x - ax, py = y - ay;
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    const double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
    return std::hypot(px - t * dx, py - t * dy) - r;
}

// 1-px anti-aliased coverage from a signed distance
float coverage(double sd) { return static_cast<float>(std::clamp(0.5 - sd, 0.0, 1.0)); }

}  // namespace

Tensor gen_alpha(const SyntheticSpec& spec, Rng& rng) {
    const int H = spec.height, W = spec.width;
    Tensor alpha(1, H, W);
    const int shapes = spec.shapes_min + rng.uniform_int(spec.shapes_max - spec.shapes_min + 1);
    const double scale = std::min(H, W);
    for (int s = 0; s < shapes; s++) {
        Tensor cov(1, H, W);
        const int kind = rng.uniform_int(3);
        if (kind == 0) {  // disk
            const double cx = rng.uniform(0.15, 0.85) * W;
            const double cy = rng.uniform(0.15, 0.85) * H;
            const double r = rng.uniform(0.08, 0.30) * scale;
            for (int y = 0; y < H; y++)
                for (int x = 0; x < W; x++)
                    cov.at(0, y, x) = coverage(std::hypot(x + 0.5 - cx, y + 0.5 - cy) - r);
        } else if (kind == 1) {  // capsule
            const double ax = rng.uniform(0.1, 0.9) * W, ay = rng.uniform(0.1, 0.9) * H;
            const double bx = rng.uniform(0.1, 0.9) * W, by = rng.uniform(0.1, 0.9) * H;
            const double r = rng.uniform(0.04, 0.12) * scale;
            for (int y = 0; y < H; y++)
                for (int x = 0; x < W; x++)
                    cov.at(0, y, x) = coverage(capsule_sdf(x + 0.5, y + 0.5, ax, ay, bx, by, r));
        } else {  // polygon blob: radially perturbed vertices around a center
            const double cx = rng.uniform(0.25, 0.75) * W, cy = rng.uniform(0.25, 0.75) * H;
            const double R = rng.uniform(0.10, 0.28) * scale;
            const int verts = 6 + rng.uniform_int(5);
            std::vector<std::pair<double, double>> poly(verts);
            for (int p = 0; p < verts; p++) {
                const double ang = 2.0 * M_PI * (p + rng.uniform(-0.2, 0.2)) / verts;
                const double r = R * rng.uniform(0.55, 1.0);
                poly[p] = {cx + r * std::cos(ang), cy + r * std::sin(ang)};
            }
            for (int y = 0; y < H; y++)
                for (int x = 0; x < W; x++)
                    cov.at(0, y, x) = coverage(polygon_sdf(poly, x + 0.5, y + 0.5));
        }
        const double sigma = rng.uniform(spec.softness_min, spec.softness_max);
        if (sigma > 0.0) cov = kernels::gaussian_blur(cov, sigma);
        float factor = 1.0f;
        if (rng.uniform() < spec.semi_transparent_prob)
            factor = static_cast<float>(rng.uniform(0.3, 0.85));
        for (int i = 0; i < alpha.size(); i++)
            alpha.v[i] = std::max(alpha.v[i], factor * std::clamp(cov.v[i], 0.0f, 1.0f));
    }
    for (auto& v : alpha.v) v = snap16(v);
    return alpha;
}

Tensor composite(const Tensor& alpha, const Tensor& foreground, const Tensor& background) {
    require_same_shape(foreground, background, "composite");
    if (alpha.c != 1 || alpha.h != foreground.h || alpha.w != foreground.w)
        throw std::invalid_argument("composite: alpha/image shape mismatch");
    Tensor img = Tensor::zeros_like(foreground);
    const int plane = alpha.h * alpha.w;
    for (int ci = 0; ci < foreground.c; ci++) {
        const float* f = foreground.channel(ci);
        const float* b = background.channel(ci);
        float* o = img.channel(ci);
        for (int i = 0; i < plane; i++)
            o[i] = alpha.v[i] * f[i] + (1.0f - alpha.v[i]) * b[i];
    }
    return img;
}

Trimap alpha_to_trimap(const Tensor& alpha, const TrimapSpec& spec) {
    Tensor tm = Tensor::zeros_like(alpha);
    Tensor unknown = Tensor::zeros_like(alpha);
    for (int i = 0; i < alpha.size(); i++) {
        if (alpha.v[i] >= spec.fg_threshold)
            tm.v[i] = 1.0f;
        else if (alpha.v[i] <= spec.bg_threshold)
            tm.v[i] = 0.0f;
        else {
            tm.v[i] = 0.5f;
            unknown.v[i] = 1.0f;
        }
    }
    if (spec.band_radius > 0) {
        Tensor dilated = kernels::dilate_square(unknown, spec.band_radius);
        for (int i = 0; i < tm.size(); i++)
            if (dilated.v[i] != 0.0f) tm.v[i] = 0.5f;
    }
    return Trimap::from_map(std::move(tm));
}

Tensor gen_texture(int height, int width, Rng& rng) {
    Tensor img(3, height, width);
    // two-color gradient along a random direction
    float c0[3], c1[3];
    for (int k = 0; k < 3; k++) {
        c0[k] = static_cast<float>(rng.uniform(0.05, 0.95));
        c1[k] = static_cast<float>(rng.uniform(0.05, 0.95));
    }
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double gx = std::cos(ang), gy = std::sin(ang);
    // coarse value-noise grid, bilinearly upsampled
    const int gn = 5;
    std::vector<double> grid(3 * gn * gn);
    for (auto& v : grid) v = rng.uniform(-0.12, 0.12);
    for (int ci = 0; ci < 3; ci++) {
        for (int y = 0; y < height; y++) {
            for (int x = 0; x < width; x++) {
                const double u = (gx * x / width + gy * y / height + 1.0) * 0.5;
                double val = c0[ci] + (c1[ci] - c0[ci]) * std::clamp(u, 0.0, 1.0);
                const double fx = static_cast<double>(x) / width * (gn - 1);
                const double fy = static_cast<double>(y) / height * (gn - 1);
                const int ix = std::min(static_cast<int>(fx), gn - 2);
                const int iy = std::min(static_cast<int>(fy), gn - 2);
                const double tx = fx - ix, ty = fy - iy;
                const double n00 = grid[(ci * gn + iy) * gn + ix];
                const double n10 = grid[(ci * gn + iy) * gn + ix + 1];
                const double n01 = grid[(ci * gn + iy + 1) * gn + ix];
                const double n11 = grid[(ci * gn + iy + 1) * gn + ix + 1];
                val += (n00 * (1 - tx) + n10 * tx) * (1 - ty) +
                       (n01 * (1 - tx) + n11 * tx) * ty;
                img.at(ci, y, x) = snap8(static_cast<float>(val));
            }
        }
    }
    return img;
}

MattingSample make_sample(const std::string& id, const SyntheticSpec& spec,
                          const TrimapSpec& tspec, Rng& rng) {
    MattingSample s;
    s.id = id;
    s.alpha = gen_alpha(spec, rng);
    s.foreground = gen_texture(spec.height, spec.width, rng);
    s.background = gen_texture(spec.height, spec.width, rng);
    s.image = composite(s.alpha, s.foreground, s.background);
    s.trimap = alpha_to_trimap(s.alpha, tspec);
    return s;
}

MattingSample random_crop(const MattingSample& sample, int size, Rng& rng) {
    const int H = sample.alpha.h, W = sample.alpha.w;
    if (size > H || size > W) throw std::invalid_argument("random_crop: size exceeds sample");
    if (size == H && size == W) return sample;

    std::vector<std::pair<int, int>> unknown_px;
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++)
            if (sample.trimap.values.at(0, y, x) == 0.5f) unknown_px.emplace_back(y, x);

    auto window_has_unknown = [&](int oy, int ox) {
        for (int y = oy; y < oy + size; y++)
            for (int x = ox; x < ox + size; x++)
                if (sample.trimap.values.at(0, y, x) == 0.5f) return true;
        return false;
    };

    int oy = rng.uniform_int(H - size + 1), ox = rng.uniform_int(W - size + 1);
    if (!unknown_px.empty()) {
        bool found = window_has_unknown(oy, ox);
        for (int attempt = 0; attempt < 9 && !found; attempt++) {
            oy = rng.uniform_int(H - size + 1);
            ox = rng.uniform_int(W - size + 1);
            found = window_has_unknown(oy, ox);
        }
        if (!found) {  // center on a random unknown pixel, clamped to bounds
            const auto [uy, ux] = unknown_px[rng.uniform_int(static_cast<int>(unknown_px.size()))];
            oy = std::clamp(uy - size / 2, 0, H - size);
            ox = std::clamp(ux - size / 2, 0, W - size);
        }
    }

    auto crop = [&](const Tensor& t) {
        if (t.empty()) return Tensor{};
        Tensor out(t.c, size, size);
        for (int ci = 0; ci < t.c; ci++)
            for (int y = 0; y < size; y++)
                for (int x = 0; x < size; x++) out.at(ci, y, x) = t.at(ci, oy + y, ox + x);
        return out;
    };
    MattingSample out;
    out.id = sample.id;
    out.image = crop(sample.image);
    out.alpha = crop(sample.alpha);
    out.trimap = Trimap{crop(sample.trimap.values)};
    out.foreground = crop(sample.foreground);
    out.background = crop(sample.background);
    return out;
}

namespace {

void write_trimap_png(const std::string& path, const Tensor& trimap) {
    Tensor enc = Tensor::zeros_like(trimap);
    for (int i = 0; i < trimap.size(); i++) {
        if (trimap.v[i] == 0.0f)
            enc.v[i] = 0.0f;
        else if (trimap.v[i] == 0.5f)
            enc.v[i] = static_cast<float>(32768.0 / 65535.0);
        else
            enc.v[i] = 1.0f;
    }
    write_png_gray16(path, enc);
}

Tensor read_trimap_png(const std::string& path) {
    Tensor raw = read_png_gray16_raw(path);
    Tensor tm = Tensor::zeros_like(raw);
    for (int i = 0; i < raw.size(); i++) {
        const int q = static_cast<int>(raw.v[i]);
        if (q == 0)
            tm.v[i] = 0.0f;
        else if (q == 32768)
            tm.v[i] = 0.5f;
        else if (q == 65535)
            tm.v[i] = 1.0f;
        else
            throw std::runtime_error(path + ": invalid trimap pixel value " + std::to_string(q) +
                                     " (expected 0, 32768 or 65535)");
    }
    return tm;
}
}  // namespace

void save_sample(const std::string& dir, const MattingSample& sample) {
    fs::create_directories(dir);
    write_png_rgb8(dir + "/image.png", sample.image);
    write_png_gray16(dir + "/alpha.png", sample.alpha);
    write_trimap_png(dir + "/trimap.png", sample.trimap.values);
    if (sample.has_fg_bg()) {
        write_png_rgb8(dir + "/fg.png", sample.foreground);
        write_png_rgb8(dir + "/bg.png", sample.background);
    }
}

MattingSample load_sample(const std::string& dir, const std::string& id) {
    MattingSample s;
    s.id = id;
    s.image = read_png_rgb8(dir + "/image.png");
    s.alpha = read_png_gray16(dir + "/alpha.png");
    s.trimap = Trimap::from_map(read_trimap_png(dir + "/trimap.png"));
    if (fs::exists(dir + "/fg.png")) s.foreground = read_png_rgb8(dir + "/fg.png");
    if (fs::exists(dir + "/bg.png")) s.background = read_png_rgb8(dir + "/bg.png");
    return s;
}

void save_matte(const std::string& path, const Tensor& alpha) { write_png_gray16(path, alpha); }
Tensor load_matte(const std::string& path) { return read_png_gray16(path); }

void write_manifest(const std::string& root, const DatasetIndex& index) {
    std::ofstream f(root + "/manifest");
    if (!f) throw std::runtime_error("cannot write manifest under " + root);
    f << "seed " << index.seed << "\n";
    for (const auto& id : index.train_ids) f << "train " << id << "\n";
    for (const auto& id : index.test_ids) f << "test " << id << "\n";
}

DatasetIndex read_manifest(const std::string& root) {
    std::ifstream f(root + "/manifest");
    if (!f) throw std::runtime_error("no manifest under " + root);
    DatasetIndex idx;
    std::string kind;
    while (f >> kind) {
        if (kind == "seed")
            f >> idx.seed;
        else {
            std::string id;
            f >> id;
            if (kind == "train")
                idx.train_ids.push_back(id);
            else if (kind == "test")
                idx.test_ids.push_back(id);
            else
                throw std::runtime_error("manifest: unknown entry kind '" + kind + "'");
        }
    }
    return idx;
}

std::vector<MattingSample> load_split(const std::string& root, const std::string& split) {
    DatasetIndex idx = read_manifest(root);
    const auto& ids = split == "train" ? idx.train_ids : idx.test_ids;
    std::vector<MattingSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(load_sample(root + "/" + split + "/" + id, id));
    return out;
}

DatasetIndex generate_dataset(const std::string& root, const SyntheticSpec& spec,
                              const TrimapSpec& tspec, int train_count, int test_count) {
    DatasetIndex idx;
    idx.seed = spec.seed;
    fs::create_directories(root + "/train");
    fs::create_directories(root + "/test");
    char buf[16];
    for (int i = 0; i < train_count + test_count; i++) {
        const bool is_train = i < train_count;
        std::snprintf(buf, sizeof(buf), "%03d", is_train ? i : i - train_count);
        const std::string id = buf;
        const std::string split = is_train ? "train" : "test";
        // independent stream per sample: generation parallelizes and stays
        // reproducible regardless of ordering
        Rng rng(Rng::splitmix(spec.seed) ^ Rng::splitmix(0x5a17 + i));
        MattingSample s = make_sample(id, spec, tspec, rng);
        save_sample(root + "/" + split + "/" + id, s);
        (is_train ? idx.train_ids : idx.test_ids).push_back(id);
    }
    write_manifest(root, idx);
    return idx;
}

}  // namespace diffmatte
