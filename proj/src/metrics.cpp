// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "diffmatte/image_io.hpp"
#include "diffmatte/kernels.hpp"

namespace diffmatte {

namespace fs = std::filesystem;

namespace {

void check_inputs(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    require_same_shape(pred, gt, "metric");
    require_same_shape(pred, mask, "metric");
    bool any = false;
    for (float m : mask.v)
        if (m != 0.0f) {
            any = true;
            break;
        }
    if (!any) throw std::invalid_argument("metric: empty evaluation mask");
}

}  // namespace

double mse(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_inputs(pred, gt, mask);
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < pred.size(); i++) {
        if (mask.v[i] == 0.0f) continue;
        const double d = static_cast<double>(pred.v[i]) - gt.v[i];
        acc += d * d;
        count++;
    }
    return acc / count;
}

double sad(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_inputs(pred, gt, mask);
    double acc = 0.0;
    for (int i = 0; i < pred.size(); i++) {
        if (mask.v[i] == 0.0f) continue;
        acc += std::abs(static_cast<double>(pred.v[i]) - gt.v[i]);
    }
    return acc;
}

namespace {

inline int sym_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// double-precision separable filtering (metrics are computed in double
// end-to-end so the brute-force oracles agree to well under 1e-9)
std::vector<double> filter_separable_f64(const Tensor& x, const std::vector<double>& kx,
                                         const std::vector<double>& ky) {
    const int rx = static_cast<int>(kx.size()) / 2;
    const int ry = static_cast<int>(ky.size()) / 2;
    std::vector<double> tmp(static_cast<size_t>(x.h) * x.w), out(tmp.size());
    for (int y = 0; y < x.h; y++)
        for (int xx = 0; xx < x.w; xx++) {
            double acc = 0.0;
            for (int k = -rx; k <= rx; k++)
                acc += kx[k + rx] * x.at(0, y, sym_index(xx + k, x.w));
            tmp[y * x.w + xx] = acc;
        }
    for (int y = 0; y < x.h; y++)
        for (int xx = 0; xx < x.w; xx++) {
            double acc = 0.0;
            for (int k = -ry; k <= ry; k++) acc += ky[k + ry] * tmp[sym_index(y + k, x.h) * x.w + xx];
            out[y * x.w + xx] = acc;
        }
    return out;
}

}  // namespace

double grad_error(const Tensor& pred, const Tensor& gt, const Tensor& mask, double sigma) {
    check_inputs(pred, gt, mask);
    const auto g = kernels::gaussian_kernel(sigma);
    const auto dg = kernels::gaussian_deriv_kernel(sigma);
    auto grad_mag = [&](const Tensor& x) {
        auto gx = filter_separable_f64(x, dg, g);
        auto gy = filter_separable_f64(x, g, dg);
        std::vector<double> m(gx.size());
        for (size_t i = 0; i < m.size(); i++) m[i] = std::hypot(gx[i], gy[i]);
        return m;
    };
    auto mp = grad_mag(pred), mg = grad_mag(gt);
    double acc = 0.0;
    for (int i = 0; i < pred.size(); i++) {
        if (mask.v[i] == 0.0f) continue;
        const double d = mp[i] - mg[i];
        acc += d * d;
    }
    return acc;
}

namespace {

// largest 4-connected component of {region}, returned as a binary map
Tensor largest_component(const Tensor& region) {
    const int H = region.h, W = region.w;
    Tensor labels(1, H, W, 0.0f);
    Tensor best(1, H, W, 0.0f);
    std::vector<char> seen(static_cast<size_t>(H) * W, 0);
    int best_size = 0;
    std::deque<int> queue;
    for (int start = 0; start < H * W; start++) {
        if (seen[start] || region.v[start] == 0.0f) continue;
        std::vector<int> comp;
        queue.push_back(start);
        seen[start] = 1;
        while (!queue.empty()) {
            const int cur = queue.front();
            queue.pop_front();
            comp.push_back(cur);
            const int y = cur / W, x = cur % W;
            const int nb[4] = {cur - W, cur + W, cur - 1, cur + 1};
            const bool ok[4] = {y > 0, y < H - 1, x > 0, x < W - 1};
            for (int k = 0; k < 4; k++) {
                if (!ok[k] || seen[nb[k]] || region.v[nb[k]] == 0.0f) continue;
                seen[nb[k]] = 1;
                queue.push_back(nb[k]);
            }
        }
        if (static_cast<int>(comp.size()) > best_size) {
            best_size = static_cast<int>(comp.size());
            std::fill(best.v.begin(), best.v.end(), 0.0f);
            for (int idx : comp) best.v[idx] = 1.0f;
        }
    }
    return best;
}

// per-pixel largest theta at which the pixel 4-connects to omega within
// {alpha >= theta}; 0 when never connected
std::vector<double> connectivity_levels(const Tensor& alpha, const Tensor& omega,
                                        const std::vector<double>& thetas_desc) {
    const int H = alpha.h, W = alpha.w;
    std::vector<double> li(static_cast<size_t>(H) * W, 0.0);
    std::vector<char> assigned(static_cast<size_t>(H) * W, 0);
    std::deque<int> queue;
    for (double theta : thetas_desc) {
        std::vector<char> visited(static_cast<size_t>(H) * W, 0);
        for (int i = 0; i < H * W; i++) {
            if (omega.v[i] != 0.0f && alpha.v[i] >= theta && !visited[i]) {
                visited[i] = 1;
                queue.push_back(i);
            }
        }
        while (!queue.empty()) {
            const int cur = queue.front();
            queue.pop_front();
            if (!assigned[cur]) {
                assigned[cur] = 1;
                li[cur] = theta;
            }
            const int y = cur / W, x = cur % W;
            const int nb[4] = {cur - W, cur + W, cur - 1, cur + 1};
            const bool ok[4] = {y > 0, y < H - 1, x > 0, x < W - 1};
            for (int k = 0; k < 4; k++) {
                if (!ok[k] || visited[nb[k]] || alpha.v[nb[k]] < theta) continue;
                visited[nb[k]] = 1;
                queue.push_back(nb[k]);
            }
        }
    }
    return li;
}

}  // namespace

double conn_error(const Tensor& pred, const Tensor& gt, const Tensor& mask, double theta_step) {
    check_inputs(pred, gt, mask);
    std::vector<double> thetas_desc;
    for (double t = 0.9; t > 0.05; t -= theta_step) thetas_desc.push_back(t);

    // source region: joint thresholding at the largest theta with a nonempty
    // component; omega is the largest component there
    Tensor omega(1, pred.h, pred.w, 0.0f);
    for (double theta : thetas_desc) {
        Tensor joint(1, pred.h, pred.w, 0.0f);
        bool any = false;
        for (int i = 0; i < pred.size(); i++) {
            if (pred.v[i] >= theta && gt.v[i] >= theta) {
                joint.v[i] = 1.0f;
                any = true;
            }
        }
        if (any) {
            omega = largest_component(joint);
            break;
        }
    }

    const std::vector<double> lp = connectivity_levels(pred, omega, thetas_desc);
    const std::vector<double> lg = connectivity_levels(gt, omega, thetas_desc);
    constexpr double kTol = 0.15;
    auto phi = [&](double a, double l) {
        const double d = a - l;
        return 1.0 - (d >= kTol ? d : 0.0);
    };
    double acc = 0.0;
    for (int i = 0; i < pred.size(); i++) {
        if (mask.v[i] == 0.0f) continue;
        acc += std::abs(phi(pred.v[i], lp[i]) - phi(gt.v[i], lg[i]));
    }
    return acc;
}

MetricReport evaluate_pair(const std::string& id, const Tensor& pred, const Tensor& gt,
                           const Tensor& mask) {
    MetricReport r;
    r.id = id;
    r.mse = mse(pred, gt, mask);
    r.sad = sad(pred, gt, mask);
    r.grad = grad_error(pred, gt, mask);
    r.conn = conn_error(pred, gt, mask);
    return r;
}

EvalTable evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir) {
    std::set<std::string> gt_ids, pred_ids;
    for (const auto& e : fs::directory_iterator(gt_dir))
        if (e.is_directory()) gt_ids.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".png") pred_ids.insert(e.path().stem().string());

    std::string missing;
    for (const auto& id : gt_ids)
        if (!pred_ids.count(id)) missing += " pred:" + id;
    for (const auto& id : pred_ids)
        if (!gt_ids.count(id)) missing += " gt:" + id;
    if (!missing.empty())
        throw std::runtime_error("evaluate_dataset: id mismatch, missing" + missing);

    EvalTable table;
    table.mean.id = "mean";
    for (const auto& id : gt_ids) {
        Tensor pred = read_png_gray16(pred_dir + "/" + id + ".png");
        Tensor gt = read_png_gray16(gt_dir + "/" + id + "/alpha.png");
        Tensor trimap = read_png_gray16(gt_dir + "/" + id + "/trimap.png");
        Tensor mask = Tensor::zeros_like(trimap);
        for (int i = 0; i < trimap.size(); i++) {
            const float v = trimap.v[i];
            mask.v[i] = (v > 0.25f && v < 0.75f) ? 1.0f : 0.0f;  // unknown band
        }
        table.rows.push_back(evaluate_pair(id, pred, gt, mask));
        table.mean.mse += table.rows.back().mse;
        table.mean.sad += table.rows.back().sad;
        table.mean.grad += table.rows.back().grad;
        table.mean.conn += table.rows.back().conn;
    }
    if (!table.rows.empty()) {
        const double n = static_cast<double>(table.rows.size());
        table.mean.mse /= n;
        table.mean.sad /= n;
        table.mean.grad /= n;
        table.mean.conn /= n;
    }
    return table;
}

std::string format_table(const EvalTable& table) {
    std::ostringstream os;
    os.precision(9);
    os << "id\tmse\tsad\tgrad\tconn\n";
    auto row = [&](const MetricReport& r) {
        os << r.id << "\t" << r.mse << "\t" << r.sad << "\t" << r.grad << "\t" << r.conn << "\n";
    };
    for (const auto& r : table.rows) row(r);
    row(table.mean);
    return os.str();
}

void write_table(const std::string& path, const EvalTable& table) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write table: " + path);
    f << format_table(table);
}

}  // namespace diffmatte
