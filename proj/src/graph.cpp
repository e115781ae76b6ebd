// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/graph.hpp"

#include <cmath>

namespace diffmatte {

int Tape::push(Tensor val, bool needs_grad) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = grad_ && needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::ensure_grad(int id) {
    if (nodes_[id].grad.empty()) nodes_[id].grad = Tensor::zeros_like(val_of(id));
}

void Tape::accum(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.sink) {  // parameter leaf: accumulate straight into the module grad
        float* dst = n.sink->grad.data();
        const float* src = g.data();
        for (int i = 0; i < g.size(); i++) dst[i] += src[i];
        return;
    }
    ensure_grad(id);
    float* dst = n.grad.data();
    const float* src = g.data();
    for (int i = 0; i < g.size(); i++) dst[i] += src[i];
}

const Tensor& Tape::grad(Var x) const {
    const Node& n = nodes_[x.id];
    if (n.sink) return n.sink->grad;
    return n.grad;
}

Var Tape::constant(Tensor v) { return Var{push(std::move(v), false)}; }

Var Tape::param(Parameter& p) {
    const bool trainable = grad_ && freeze_depth_ == 0;
    int id = push(Tensor{}, trainable);
    nodes_[id].ext = &p.value;
    if (trainable) nodes_[id].sink = &p;
    return Var{id};
}

void Tape::backward(Var loss) {
    if (!grad_) throw std::logic_error("backward on a no-grad tape");
    if (val_of(loss.id).size() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    ensure_grad(loss.id);
    nodes_[loss.id].grad.v[0] = 1.0f;
    for (int i = loss.id; i >= 0; i--) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty() || !n.back) continue;
        n.back(*this);
    }
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& xt = val_of(x.id);
    const Tensor& wt = val_of(w.id);
    static const std::vector<float> no_bias;
    std::vector<float> bias_store;
    const std::vector<float>* bias = &no_bias;
    if (b.valid()) {
        const Tensor& bt = val_of(b.id);
        bias_store.assign(bt.v.begin(), bt.v.end());
        bias = &bias_store;
    }
    Tensor y = kernels::conv2d(xt, wt, *bias, stride, pad);
    const bool needs_grad = req(x) || req(w) || (b.valid() && req(b));
    // capture everything needed before push(): node references go stale
    const kernels::ConvDims d{xt.c, xt.h, xt.w, wt.c, wt.h / xt.c, wt.w, stride, pad};
    int id = push(std::move(y), needs_grad);
    if (needs_grad) {
        nodes_[id].back = [x, w, b, d, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            if (t.req(x))
                t.accum(x.id, kernels::conv2d_backward_input(dy, t.val_of(w.id), d));
            if (t.req(w))
                t.accum(w.id, kernels::conv2d_backward_weight(dy, t.val_of(x.id), d));
            if (b.valid() && t.req(b)) {
                auto db = kernels::conv2d_backward_bias(dy);
                Tensor dbt(static_cast<int>(db.size()), 1, 1);
                dbt.v.assign(db.begin(), db.end());
                t.accum(b.id, dbt);
            }
        };
    }
    return Var{id};
}

Var Tape::group_norm(Var x, Var gamma, Var beta, int groups, float eps) {
    const Tensor& xt = val_of(x.id);
    std::vector<float> g(val_of(gamma.id).v.begin(), val_of(gamma.id).v.end());
    std::vector<float> bt(val_of(beta.id).v.begin(), val_of(beta.id).v.end());
    kernels::GroupNormStats stats;
    Tensor y = kernels::group_norm(xt, g, bt, groups, eps, &stats);
    const bool needs_grad = req(x) || req(gamma) || req(beta);
    int id = push(std::move(y), needs_grad);
    if (needs_grad) {
        nodes_[id].back = [x, gamma, beta, groups, stats, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            const Tensor& xt2 = t.val_of(x.id);
            std::vector<float> g2(t.val_of(gamma.id).v.begin(), t.val_of(gamma.id).v.end());
            Tensor dx;
            std::vector<float> dgamma, dbeta;
            kernels::group_norm_backward(dy, xt2, g2, groups, stats, dx, dgamma, dbeta);
            if (t.req(x)) t.accum(x.id, dx);
            if (t.req(gamma)) {
                Tensor dg(static_cast<int>(dgamma.size()), 1, 1);
                dg.v.assign(dgamma.begin(), dgamma.end());
                t.accum(gamma.id, dg);
            }
            if (t.req(beta)) {
                Tensor db(static_cast<int>(dbeta.size()), 1, 1);
                db.v.assign(dbeta.begin(), dbeta.end());
                t.accum(beta.id, db);
            }
        };
    }
    return Var{id};
}

Var Tape::silu(Var x) {
    Tensor y = kernels::silu(val_of(x.id));
    int id = push(std::move(y), req(x));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [x, id](Tape& t) {
            t.accum(x.id, kernels::silu_backward(t.nodes_[id].grad, t.val_of(x.id)));
        };
    }
    return Var{id};
}

Var Tape::add(Var a, Var b) { return axpby(1.0, a, 1.0, b); }

Var Tape::mul(Var a, Var b) {
    const Tensor& at = val_of(a.id);
    const Tensor& bt = val_of(b.id);
    require_same_shape(at, bt, "mul");
    Tensor y = Tensor::zeros_like(at);
    for (int i = 0; i < y.size(); i++) y.v[i] = at.v[i] * bt.v[i];
    int id = push(std::move(y), req(a) || req(b));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [a, b, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            if (t.req(a)) {
                Tensor g = Tensor::zeros_like(dy);
                for (int i = 0; i < g.size(); i++) g.v[i] = dy.v[i] * t.val_of(b.id).v[i];
                t.accum(a.id, g);
            }
            if (t.req(b)) {
                Tensor g = Tensor::zeros_like(dy);
                for (int i = 0; i < g.size(); i++) g.v[i] = dy.v[i] * t.val_of(a.id).v[i];
                t.accum(b.id, g);
            }
        };
    }
    return Var{id};
}

Var Tape::axpby(double alpha, Var a, double beta, Var b) {
    const Tensor& at = val_of(a.id);
    const Tensor& bt = val_of(b.id);
    require_same_shape(at, bt, "axpby");
    Tensor y = Tensor::zeros_like(at);
    for (int i = 0; i < y.size(); i++)
        y.v[i] = static_cast<float>(alpha * at.v[i] + beta * bt.v[i]);
    int id = push(std::move(y), req(a) || req(b));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [a, b, alpha, beta, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            if (t.req(a)) {
                Tensor g = Tensor::zeros_like(dy);
                for (int i = 0; i < g.size(); i++)
                    g.v[i] = static_cast<float>(alpha * dy.v[i]);
                t.accum(a.id, g);
            }
            if (t.req(b)) {
                Tensor g = Tensor::zeros_like(dy);
                for (int i = 0; i < g.size(); i++) g.v[i] = static_cast<float>(beta * dy.v[i]);
                t.accum(b.id, g);
            }
        };
    }
    return Var{id};
}

Var Tape::affine(Var x, double alpha, double beta) {
    const Tensor& xt = val_of(x.id);
    Tensor y = Tensor::zeros_like(xt);
    for (int i = 0; i < y.size(); i++)
        y.v[i] = static_cast<float>(alpha * xt.v[i] + beta);
    int id = push(std::move(y), req(x));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [x, alpha, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            Tensor g = Tensor::zeros_like(dy);
            for (int i = 0; i < g.size(); i++) g.v[i] = static_cast<float>(alpha * dy.v[i]);
            t.accum(x.id, g);
        };
    }
    return Var{id};
}

Var Tape::add_channel_bias(Var x, Var bias) {
    const Tensor& xt = val_of(x.id);
    const Tensor& bt = val_of(bias.id);
    if (bt.size() != xt.c) throw std::invalid_argument("add_channel_bias: bias size != channels");
    Tensor y = xt;
    for (int ci = 0; ci < xt.c; ci++) {
        float* yc = y.channel(ci);
        const float b = bt.v[ci];
        for (int i = 0; i < xt.h * xt.w; i++) yc[i] += b;
    }
    int id = push(std::move(y), req(x) || req(bias));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [x, bias, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            if (t.req(x)) t.accum(x.id, dy);
            if (t.req(bias)) {
                Tensor db(dy.c, 1, 1);
                for (int ci = 0; ci < dy.c; ci++) {
                    double s = 0.0;
                    const float* c = dy.channel(ci);
                    for (int i = 0; i < dy.h * dy.w; i++) s += c[i];
                    db.v[ci] = static_cast<float>(s);
                }
                t.accum(bias.id, db);
            }
        };
    }
    return Var{id};
}

Var Tape::concat_channels(Var a, Var b) {
    const Tensor& at = val_of(a.id);
    const Tensor& bt = val_of(b.id);
    if (at.h != bt.h || at.w != bt.w)
        throw std::invalid_argument("concat_channels: spatial mismatch " + at.shape_str() +
                                    " vs " + bt.shape_str());
    Tensor y(at.c + bt.c, at.h, at.w);
    std::copy(at.v.begin(), at.v.end(), y.v.begin());
    std::copy(bt.v.begin(), bt.v.end(), y.v.begin() + at.size());
    const int asz = at.size();
    int id = push(std::move(y), req(a) || req(b));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [a, b, asz, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            if (t.req(a)) {
                Tensor ga = Tensor::zeros_like(t.val_of(a.id));
                std::copy(dy.v.begin(), dy.v.begin() + asz, ga.v.begin());
                t.accum(a.id, ga);
            }
            if (t.req(b)) {
                Tensor gb = Tensor::zeros_like(t.val_of(b.id));
                std::copy(dy.v.begin() + asz, dy.v.end(), gb.v.begin());
                t.accum(b.id, gb);
            }
        };
    }
    return Var{id};
}

Var Tape::upsample_nearest2x(Var x) {
    Tensor y = kernels::upsample_nearest2x(val_of(x.id));
    int id = push(std::move(y), req(x));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [x, id](Tape& t) {
            t.accum(x.id, kernels::upsample_nearest2x_backward(t.nodes_[id].grad));
        };
    }
    return Var{id};
}

Var Tape::avgpool2x(Var x) {
    Tensor y = kernels::avgpool2x(val_of(x.id));
    int id = push(std::move(y), req(x));
    if (nodes_[id].needs_grad) {
        nodes_[id].back = [x, id](Tape& t) {
            t.accum(x.id, kernels::avgpool2x_backward(t.nodes_[id].grad));
        };
    }
    return Var{id};
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& xt = val_of(x.id);
    const Tensor& wt = val_of(w.id);  // (out, in, 1)
    const int in = wt.h, out = wt.c;
    if (xt.size() != in) throw std::invalid_argument("linear: input size mismatch");
    Tensor y(out, 1, 1);
    for (int o = 0; o < out; o++) {
        double acc = b.valid() ? val_of(b.id).v[o] : 0.0;
        const float* wrow = wt.data() + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; i++) acc += static_cast<double>(wrow[i]) * xt.v[i];
        y.v[o] = static_cast<float>(acc);
    }
    const bool needs_grad = req(x) || req(w) || (b.valid() && req(b));
    int id = push(std::move(y), needs_grad);
    if (needs_grad) {
        nodes_[id].back = [x, w, b, in, out, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            const Tensor& wt2 = t.val_of(w.id);
            const Tensor& xt2 = t.val_of(x.id);
            if (t.req(x)) {
                Tensor gx = Tensor::zeros_like(xt2);
                for (int o = 0; o < out; o++) {
                    const float* wrow = wt2.data() + static_cast<size_t>(o) * in;
                    for (int i = 0; i < in; i++) gx.v[i] += dy.v[o] * wrow[i];
                }
                t.accum(x.id, gx);
            }
            if (t.req(w)) {
                Tensor gw = Tensor::zeros_like(wt2);
                for (int o = 0; o < out; o++)
                    for (int i = 0; i < in; i++)
                        gw.v[static_cast<size_t>(o) * in + i] = dy.v[o] * xt2.v[i];
                t.accum(w.id, gw);
            }
            if (b.valid() && t.req(b)) t.accum(b.id, dy);
        };
    }
    return Var{id};
}

Var Tape::masked_blend(Var x, const Tensor& other, const Tensor& mask) {
    const Tensor& xt = val_of(x.id);
    require_same_shape(xt, other, "masked_blend");
    require_same_shape(xt, mask, "masked_blend");
    Tensor y = Tensor::zeros_like(xt);
    for (int i = 0; i < y.size(); i++)
        y.v[i] = mask.v[i] != 0.0f ? other.v[i] : xt.v[i];
    int id = push(std::move(y), req(x));
    if (nodes_[id].needs_grad) {
        Tensor m = mask;
        nodes_[id].back = [x, m, id](Tape& t) {
            const Tensor& dy = t.nodes_[id].grad;
            Tensor g = Tensor::zeros_like(dy);
            for (int i = 0; i < g.size(); i++) g.v[i] = m.v[i] != 0.0f ? 0.0f : dy.v[i];
            t.accum(x.id, g);
        };
    }
    return Var{id};
}

Var Tape::mse_against(Var x, const Tensor& target) {
    const Tensor& xt = val_of(x.id);
    require_same_shape(xt, target, "mse_against");
    double acc = 0.0;
    for (int i = 0; i < xt.size(); i++) {
        const double d = static_cast<double>(xt.v[i]) - target.v[i];
        acc += d * d;
    }
    const int count = xt.size();
    Tensor y(1, 1, 1);
    y.v[0] = static_cast<float>(acc / count);
    int id = push(std::move(y), req(x));
    nodes_[id].has_hi = true;
    nodes_[id].hi = acc / count;
    if (nodes_[id].needs_grad) {
        Tensor tgt = target;
        nodes_[id].back = [x, tgt, id](Tape& t) {
            const float gy = t.nodes_[id].grad.v[0];
            const Tensor& xt2 = t.val_of(x.id);
            Tensor g = Tensor::zeros_like(xt2);
            const float scale = 2.0f * gy / xt2.size();
            for (int i = 0; i < g.size(); i++) g.v[i] = scale * (xt2.v[i] - tgt.v[i]);
            t.accum(x.id, g);
        };
    }
    return Var{id};
}

Var Tape::l1_against(Var x, const Tensor& target) {
    const Tensor& xt = val_of(x.id);
    require_same_shape(xt, target, "l1_against");
    double acc = 0.0;
    for (int i = 0; i < xt.size(); i++)
        acc += std::abs(static_cast<double>(xt.v[i]) - target.v[i]);
    const int count = xt.size();
    Tensor y(1, 1, 1);
    y.v[0] = static_cast<float>(acc / count);
    int id = push(std::move(y), req(x));
    nodes_[id].has_hi = true;
    nodes_[id].hi = acc / count;
    if (nodes_[id].needs_grad) {
        Tensor tgt = target;
        nodes_[id].back = [x, tgt, id](Tape& t) {
            const float gy = t.nodes_[id].grad.v[0];
            const Tensor& xt2 = t.val_of(x.id);
            Tensor g = Tensor::zeros_like(xt2);
            const float scale = gy / xt2.size();
            for (int i = 0; i < g.size(); i++) {
                const float d = xt2.v[i] - tgt.v[i];
                g.v[i] = d > 0.0f ? scale : (d < 0.0f ? -scale : 0.0f);
            }
            t.accum(x.id, g);
        };
    }
    return Var{id};
}

Var Tape::composition_l1(Var a, const Tensor& image, const Tensor& fg, const Tensor& bg) {
    const Tensor& at = val_of(a.id);
    if (at.c != 1) throw std::invalid_argument("composition_l1: alpha must be single channel");
    require_same_shape(image, fg, "composition_l1");
    require_same_shape(image, bg, "composition_l1");
    if (image.h != at.h || image.w != at.w)
        throw std::invalid_argument("composition_l1: alpha/image spatial mismatch");
    const int plane = at.h * at.w;
    double acc = 0.0;
    for (int ci = 0; ci < image.c; ci++) {
        const float *ic = image.channel(ci), *fc = fg.channel(ci), *bc = bg.channel(ci);
        for (int i = 0; i < plane; i++) {
            const double comp = static_cast<double>(at.v[i]) * fc[i] +
                                (1.0 - static_cast<double>(at.v[i])) * bc[i];
            acc += std::abs(ic[i] - comp);
        }
    }
    Tensor y(1, 1, 1);
    y.v[0] = static_cast<float>(acc / (static_cast<double>(image.c) * plane));
    int id = push(std::move(y), req(a));
    nodes_[id].has_hi = true;
    nodes_[id].hi = acc / (static_cast<double>(image.c) * plane);
    if (nodes_[id].needs_grad) {
        Tensor img = image, f = fg, b = bg;
        nodes_[id].back = [a, img, f, b, plane, id](Tape& t) {
            const float gy = t.nodes_[id].grad.v[0];
            const Tensor& at2 = t.val_of(a.id);
            Tensor g(1, at2.h, at2.w);
            const double scale = gy / (static_cast<double>(img.c) * plane);
            for (int ci = 0; ci < img.c; ci++) {
                const float *ic = img.channel(ci), *fc = f.channel(ci), *bc = b.channel(ci);
                for (int i = 0; i < plane; i++) {
                    const double comp = static_cast<double>(at2.v[i]) * fc[i] +
                                        (1.0 - static_cast<double>(at2.v[i])) * bc[i];
                    const double resid = ic[i] - comp;
                    const double sgn = resid > 0.0 ? 1.0 : (resid < 0.0 ? -1.0 : 0.0);
                    // d|I - comp|/da = -sgn * (F - B)
                    g.v[i] += static_cast<float>(-sgn * (fc[i] - bc[i]) * scale);
                }
            }
            t.accum(a.id, g);
        };
    }
    return Var{id};
}

Var Tape::weighted_sum(const std::vector<Var>& xs, const std::vector<double>& ws) {
    if (xs.size() != ws.size()) throw std::invalid_argument("weighted_sum: size mismatch");
    double acc = 0.0;
    bool needs_grad = false;
    for (size_t i = 0; i < xs.size(); i++) {
        acc += ws[i] * scalar(xs[i]);
        needs_grad = needs_grad || req(xs[i]);
    }
    Tensor y(1, 1, 1);
    y.v[0] = static_cast<float>(acc);
    int id = push(std::move(y), needs_grad);
    nodes_[id].has_hi = true;
    nodes_[id].hi = acc;
    if (nodes_[id].needs_grad) {
        std::vector<Var> xs2 = xs;
        std::vector<double> ws2 = ws;
        nodes_[id].back = [xs2, ws2, id](Tape& t) {
            const float gy = t.nodes_[id].grad.v[0];
            for (size_t i = 0; i < xs2.size(); i++) {
                if (!t.req(xs2[i])) continue;
                Tensor g(1, 1, 1);
                g.v[0] = static_cast<float>(ws2[i] * gy);
                t.accum(xs2[i].id, g);
            }
        };
    }
    return Var{id};
}

}  // namespace diffmatte
