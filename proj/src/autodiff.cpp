#include "nowcast/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "nowcast/errors.hpp"

namespace nowcast::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw Error(ErrorKind::ShapeMismatch, op + ": " + detail);
}

void require_same(const char* op, const Shape& a, const Shape& b) {
    if (!(a == b)) shape_error(op, a.str() + " vs " + b.str());
}

// cols[(c*k + ky)*k + kx][oy*wo + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* img, int channels, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* cols) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int c = 0; c < channels; ++c) {
        const double* src = img + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    double* dst = row + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, 0.0);
                        continue;
                    }
                    const double* srow = src + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates columns back into the image.
void col2im(const double* cols, int channels, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* img) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int c = 0; c < channels; ++c) {
        double* dst = img + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    double* drow = dst + static_cast<std::size_t>(iy) * w;
                    const double* srow = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

template <typename F, typename D>
Var unary(Var a, F f, D dydx) {
    const Tensor& x = a.value();
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a, dydx](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& x = g.value(a.id);
        const Tensor& y = g.value(self);
        if (!g.requires_grad(a.id)) return;
        Tensor& gx = g.grad(a.id);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dydx(x[i], y[i]);
    });
}

}  // namespace

std::string Shape::str() const {
    return "{" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "}";
}

void init_uniform(Parameter& p, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.value.data) v = dist(rng);
}

void init_glorot(Parameter& p, double fan_in, double fan_out, std::mt19937_64& rng) {
    init_uniform(p, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

const Tensor& Var::value() const { return graph->value(id); }
const Shape& Var::shape() const { return graph->value(id).shape; }

Var Graph::constant(Tensor value) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(Parameter& p, bool trainable) {
    auto node = std::make_unique<Node>();
    node->value = p.value;
    if (trainable) {
        node->requires_grad = true;
        node->param = &p;
    }
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::make(Tensor value, std::span<const Var> parents, Backward backward) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    for (const Var& p : parents) {
        if (p.graph != this) throw Error(ErrorKind::ShapeMismatch, "operand belongs to another graph");
        node->requires_grad = node->requires_grad || nodes_[p.id]->requires_grad;
    }
    if (node->requires_grad) node->backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad(int id) {
    Node& n = *nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

void Graph::backward(Var root) {
    if (root.graph != this) throw Error(ErrorKind::ShapeMismatch, "root belongs to another graph");
    if (value(root.id).size() != 1) throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar root");
    if (!nodes_[root.id]->requires_grad) return;
    grad(root.id)[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = *nodes_[id];
        if (!n.requires_grad || n.grad.data.empty()) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            auto& pg = n.param->grad.data;
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad.data[i];
        }
    }
}

Var conv2d(Var x, Var weight, Var bias, int stride, int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.c != xs.c || ws.h != ws.w) shape_error("conv2d", "input " + xs.str() + " weight " + ws.str());
    if (bias.valid() && !(bias.shape() == Shape{1, ws.n, 1, 1})) shape_error("conv2d", "bias " + bias.shape().str());
    const int k = ws.h;
    const int ho = (xs.h + 2 * pad - k) / stride + 1;
    const int wo = (xs.w + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) shape_error("conv2d", "kernel larger than padded input");
    const int cout = ws.n;
    const int kk = xs.c * k * k;
    const int p = ho * wo;

    Tensor out(Shape{xs.n, cout, ho, wo});
    std::vector<double> cols(static_cast<std::size_t>(kk) * p);
    ConstMapMat wm(weight.value().data.data(), cout, kk);
    for (int n = 0; n < xs.n; ++n) {
        im2col(x.value().data.data() + n * xs.per_sample(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
        MapMat o(out.data.data() + static_cast<std::size_t>(n) * cout * p, cout, p);
        o.noalias() = wm * ConstMapMat(cols.data(), kk, p);
        if (bias.valid())
            for (int c = 0; c < cout; ++c) o.row(c).array() += bias.value()[c];
    }

    std::vector<Var> parents{x, weight};
    if (bias.valid()) parents.push_back(bias);
    return x.graph->make(std::move(out), parents, [=](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(x.id);
        ConstMapMat wm(g.value(weight.id).data.data(), cout, kk);
        std::vector<double> cols(static_cast<std::size_t>(kk) * p);
        std::vector<double> dcols(static_cast<std::size_t>(kk) * p);
        const bool need_x = g.requires_grad(x.id);
        const bool need_w = g.requires_grad(weight.id);
        const bool need_b = bias.valid() && g.requires_grad(bias.id);
        for (int n = 0; n < xs.n; ++n) {
            ConstMapMat go(gy.data.data() + static_cast<std::size_t>(n) * cout * p, cout, p);
            if (need_w) {
                im2col(xv.data.data() + n * xs.per_sample(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
                MapMat gw(g.grad(weight.id).data.data(), cout, kk);
                gw.noalias() += go * ConstMapMat(cols.data(), kk, p).transpose();
            }
            if (need_b) {
                Tensor& gb = g.grad(bias.id);
                for (int c = 0; c < cout; ++c) gb[c] += go.row(c).sum();
            }
            if (need_x) {
                MapMat dc(dcols.data(), kk, p);
                dc.noalias() = wm.transpose() * go;
                col2im(dcols.data(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo,
                       g.grad(x.id).data.data() + n * xs.per_sample());
            }
        }
    });
}

Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.n != xs.c || ws.h != ws.w) shape_error("conv_transpose2d", "input " + xs.str() + " weight " + ws.str());
    const int cout = ws.c;
    if (bias.valid() && !(bias.shape() == Shape{1, cout, 1, 1}))
        shape_error("conv_transpose2d", "bias " + bias.shape().str());
    const int k = ws.h;
    const int ho = (xs.h - 1) * stride - 2 * pad + k;
    const int wo = (xs.w - 1) * stride - 2 * pad + k;
    if (ho <= 0 || wo <= 0) shape_error("conv_transpose2d", "empty output");
    const int kk = cout * k * k;
    const int pin = xs.h * xs.w;
    const std::size_t out_sample = static_cast<std::size_t>(cout) * ho * wo;

    Tensor out(Shape{xs.n, cout, ho, wo});
    std::vector<double> cols(static_cast<std::size_t>(kk) * pin);
    ConstMapMat wm(weight.value().data.data(), xs.c, kk);
    for (int n = 0; n < xs.n; ++n) {
        MapMat c(cols.data(), kk, pin);
        c.noalias() = wm.transpose() * ConstMapMat(x.value().data.data() + n * xs.per_sample(), xs.c, pin);
        double* o = out.data.data() + n * out_sample;
        col2im(cols.data(), cout, ho, wo, k, stride, pad, xs.h, xs.w, o);
        if (bias.valid())
            for (int ch = 0; ch < cout; ++ch)
                for (int i = 0; i < ho * wo; ++i) o[static_cast<std::size_t>(ch) * ho * wo + i] += bias.value()[ch];
    }

    std::vector<Var> parents{x, weight};
    if (bias.valid()) parents.push_back(bias);
    return x.graph->make(std::move(out), parents, [=](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& xv = g.value(x.id);
        ConstMapMat wm(g.value(weight.id).data.data(), xs.c, kk);
        std::vector<double> dcols(static_cast<std::size_t>(kk) * pin);
        const bool need_x = g.requires_grad(x.id);
        const bool need_w = g.requires_grad(weight.id);
        const bool need_b = bias.valid() && g.requires_grad(bias.id);
        for (int n = 0; n < xs.n; ++n) {
            const double* go = gy.data.data() + n * out_sample;
            im2col(go, cout, ho, wo, k, stride, pad, xs.h, xs.w, dcols.data());
            ConstMapMat dc(dcols.data(), kk, pin);
            if (need_x) {
                MapMat gx(g.grad(x.id).data.data() + n * xs.per_sample(), xs.c, pin);
                gx.noalias() += wm * dc;
            }
            if (need_w) {
                MapMat gw(g.grad(weight.id).data.data(), xs.c, kk);
                gw.noalias() += ConstMapMat(xv.data.data() + n * xs.per_sample(), xs.c, pin) * dc.transpose();
            }
            if (need_b) {
                Tensor& gb = g.grad(bias.id);
                for (int ch = 0; ch < cout; ++ch) {
                    double s = 0.0;
                    for (int i = 0; i < ho * wo; ++i) s += go[static_cast<std::size_t>(ch) * ho * wo + i];
                    gb[ch] += s;
                }
            }
        }
    });
}

Var dense(Var x, Var weight, Var bias) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int features = static_cast<int>(xs.per_sample());
    if (ws.c * ws.h * ws.w != features) shape_error("dense", "input " + xs.str() + " weight " + ws.str());
    const int outs = ws.n;
    if (bias.valid() && !(bias.shape() == Shape{1, outs, 1, 1})) shape_error("dense", "bias " + bias.shape().str());

    Tensor out(Shape{xs.n, outs, 1, 1});
    ConstMapMat xm(x.value().data.data(), xs.n, features);
    ConstMapMat wm(weight.value().data.data(), outs, features);
    MapMat om(out.data.data(), xs.n, outs);
    om.noalias() = xm * wm.transpose();
    if (bias.valid())
        for (int r = 0; r < xs.n; ++r)
            for (int o = 0; o < outs; ++o) om(r, o) += bias.value()[o];

    std::vector<Var> parents{x, weight};
    if (bias.valid()) parents.push_back(bias);
    return x.graph->make(std::move(out), parents, [=](Graph& g, int self) {
        ConstMapMat go(g.grad(self).data.data(), xs.n, outs);
        if (g.requires_grad(x.id)) {
            MapMat gx(g.grad(x.id).data.data(), xs.n, features);
            gx.noalias() += go * ConstMapMat(g.value(weight.id).data.data(), outs, features);
        }
        if (g.requires_grad(weight.id)) {
            MapMat gw(g.grad(weight.id).data.data(), outs, features);
            gw.noalias() += go.transpose() * ConstMapMat(g.value(x.id).data.data(), xs.n, features);
        }
        if (bias.valid() && g.requires_grad(bias.id)) {
            Tensor& gb = g.grad(bias.id);
            for (int o = 0; o < outs; ++o) gb[o] += go.col(o).sum();
        }
    });
}

Var add(Var a, Var b) {
    require_same("add", a.shape(), b.shape());
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
    const Var parents[] = {a, b};
    return a.graph->make(std::move(y), parents, [a, b](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        for (const Var v : {a, b}) {
            if (!g.requires_grad(v.id)) continue;
            Tensor& gv = g.grad(v.id);
            for (std::size_t i = 0; i < gy.size(); ++i) gv[i] += gy[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same("sub", a.shape(), b.shape());
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
    const Var parents[] = {a, b};
    return a.graph->make(std::move(y), parents, [a, b](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (g.requires_grad(a.id)) {
            if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        if (g.requires_grad(b.id)) {
            Tensor& gb = g.grad(b.id);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same("mul", a.shape(), b.shape());
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
    const Var parents[] = {a, b};
    return a.graph->make(std::move(y), parents, [a, b](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (g.requires_grad(a.id)) {
            if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
            const Tensor& bv = g.value(b.id);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (g.requires_grad(b.id)) {
            Tensor& gb = g.grad(b.id);
            const Tensor& av = g.value(a.id);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var one_minus(Var a) {
    return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
    return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) shape_error("concat_channels", "no inputs");
    const Shape s0 = parts[0].shape();
    int channels = 0;
    for (const Var& v : parts) {
        const Shape s = v.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w) shape_error("concat_channels", s.str() + " vs " + s0.str());
        channels += s.c;
    }
    const Shape os{s0.n, channels, s0.h, s0.w};
    Tensor y(os);
    for (int n = 0; n < s0.n; ++n) {
        double* dst = y.data.data() + n * os.per_sample();
        for (const Var& v : parts) {
            const Shape s = v.shape();
            const double* src = v.value().data.data() + n * s.per_sample();
            dst = std::copy(src, src + s.per_sample(), dst);
        }
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return parts[0].graph->make(std::move(y), parents, [parents, os](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        for (int n = 0; n < os.n; ++n) {
            const double* src = gy.data.data() + n * os.per_sample();
            for (const Var& v : parents) {
                const std::size_t len = g.value(v.id).shape.per_sample();
                if (g.requires_grad(v.id)) {
                    double* dst = g.grad(v.id).data.data() + n * len;
                    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                }
                src += len;
            }
        }
    });
}

Var slice_channels(Var a, int begin, int end) {
    const Shape s = a.shape();
    if (begin < 0 || end > s.c || begin >= end) shape_error("slice_channels", "range outside " + s.str());
    const Shape os{s.n, end - begin, s.h, s.w};
    Tensor y(os);
    for (int n = 0; n < s.n; ++n) {
        const double* src = a.value().data.data() + n * s.per_sample() + begin * s.plane();
        std::copy(src, src + os.per_sample(), y.data.data() + n * os.per_sample());
    }
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a, s, os, begin](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
        for (int n = 0; n < s.n; ++n) {
            double* dst = ga.data.data() + n * s.per_sample() + begin * s.plane();
            const double* src = gy.data.data() + n * os.per_sample();
            for (std::size_t i = 0; i < os.per_sample(); ++i) dst[i] += src[i];
        }
    });
}

Var reshape(Var a, Shape s) {
    if (s.size() != a.shape().size()) shape_error("reshape", a.shape().str() + " to " + s.str());
    Tensor y = a.value();
    y.shape = s;
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    });
}

Var avg_pool(Var a, int k) {
    if (k < 1) shape_error("avg_pool", "window must be >= 1");
    if (k == 1) return a;
    const Shape s = a.shape();
    const Shape os{s.n, s.c, (s.h + k - 1) / k, (s.w + k - 1) / k};
    Tensor y(os);
    const Tensor& x = a.value();
    auto window = [s, k](int oy, int ox) {
        const int y1 = std::min(s.h, (oy + 1) * k);
        const int x1 = std::min(s.w, (ox + 1) * k);
        return std::array<int, 4>{oy * k, y1, ox * k, x1};
    };
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    const auto [y0, y1, x0, x1] = window(oy, ox);
                    double acc = 0.0;
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) acc += x.at(n, c, yy, xx);
                    y.at(n, c, oy, ox) = acc / ((y1 - y0) * (x1 - x0));
                }
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a, s, os, window](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int oy = 0; oy < os.h; ++oy)
                    for (int ox = 0; ox < os.w; ++ox) {
                        const auto [y0, y1, x0, x1] = window(oy, ox);
                        const double share = gy.at(n, c, oy, ox) / ((y1 - y0) * (x1 - x0));
                        for (int yy = y0; yy < y1; ++yy)
                            for (int xx = x0; xx < x1; ++xx) ga.at(n, c, yy, xx) += share;
                    }
    });
}

Var sum(Var a) {
    Tensor y(Shape{1, 1, 1, 1});
    for (double v : a.value().data) y[0] += v;
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a](Graph& g, int self) {
        if (!g.requires_grad(a.id)) return;
        const double gy = g.grad(self)[0];
        for (double& v : g.grad(a.id).data) v += gy;
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.shape().size())); }

Var sum_per_sample(Var a) {
    const Shape s = a.shape();
    Tensor y(Shape{s.n, 1, 1, 1});
    for (int n = 0; n < s.n; ++n) {
        const double* src = a.value().data.data() + n * s.per_sample();
        double acc = 0.0;
        for (std::size_t i = 0; i < s.per_sample(); ++i) acc += src[i];
        y[n] = acc;
    }
    const Var parents[] = {a};
    return a.graph->make(std::move(y), parents, [a, s](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (!g.requires_grad(a.id)) return;
        Tensor& ga = g.grad(a.id);
        for (int n = 0; n < s.n; ++n)
            for (std::size_t i = 0; i < s.per_sample(); ++i) ga[n * s.per_sample() + i] += gy[n];
    });
}

}  // namespace nowcast::ad
