#include "ganmex/tensor/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ganmex {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.tape_ != this) throw std::invalid_argument("tape: operand recorded on a different tape");
        needs = needs || nodes_[in.id_].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id_).value; }

bool Tape::requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }

void Tape::backward(Var root) {
    const Tensor& value = nodes_.at(root.id_).value;
    if (value.numel() != 1) throw_shape_error("backward", {value.shape()}, "root must be scalar");
    backward(root, Tensor(value.shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
    Node& node = nodes_.at(root.id_);
    if (seed.shape() != node.value.shape()) throw_shape_error("backward", {node.value.shape(), seed.shape()});
    accumulate(root, seed);
    sweep(root.id_);
}

void Tape::sweep(std::size_t root_id) {
    for (std::size_t i = root_id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) continue;
        node.backward(*this, node.grad);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_.at(v.id_);
    if (!node.has_grad) return Tensor::like(node.value);
    return node.grad;
}

void Tape::zero_grad() {
    for (auto& node : nodes_) {
        node.grad = Tensor();
        node.has_grad = false;
    }
}

Tensor* Tape::grad_buffer(Var v) {
    Node& node = nodes_.at(v.id_);
    if (!node.requires_grad) return nullptr;
    if (!node.has_grad) {
        node.grad = Tensor::like(node.value);
        node.has_grad = true;
    }
    return &node.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
    Tensor* buf = grad_buffer(v);
    if (buf) *buf += g;
}

std::vector<Tensor> backward_grad(Var root, std::span<const Var> wrt) {
    Tape& tape = root.tape();
    tape.zero_grad();
    tape.backward(root);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& v : wrt) out.push_back(tape.grad(v));
    return out;
}

namespace ops {
namespace {

void require_same(const char* op, Var a, Var b) {
    if (a.shape() != b.shape()) throw_shape_error(op, {a.shape(), b.shape()});
}

void require_rank(const char* op, Var x, std::size_t rank) {
    if (x.shape().size() != rank) {
        throw_shape_error(op, {x.shape()}, "expected rank " + std::to_string(rank));
    }
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = fwd(in[i]);
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x, deriv](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        if (!dx) return;
        const Tensor& xin = tape.value(x);
        for (std::size_t i = 0; i < g.numel(); ++i) (*dx)[i] += g[i] * deriv(xin[i]);
    });
}

}  // namespace

Var add(Var a, Var b) {
    require_same("add", a, b);
    Tensor out = a.value() + b.value();
    Var inputs[] = {a, b};
    return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    require_same("sub", a, b);
    Tensor out = a.value() - b.value();
    Var inputs[] = {a, b};
    return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        if (Tensor* db = tape.grad_buffer(b)) *db -= g;
    });
}

Var mul(Var a, Var b) {
    require_same("mul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    Var inputs[] = {a, b};
    return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
        const Tensor& av = tape.value(a);
        const Tensor& bv = tape.value(b);
        if (Tensor* da = tape.grad_buffer(a)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*da)[i] += g[i] * bv[i];
        }
        if (Tensor* db = tape.grad_buffer(b)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*db)[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double v) { return s * v; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Var one_minus(Var a) {
    return unary(a, [](double v) { return 1.0 - v; }, [](double) { return -1.0; });
}

Var matmul(Var a, Var b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) throw_shape_error("matmul", {a.shape(), b.shape()}, "inner dimensions differ");
    Tensor out({m, n});
    RowMap(out.data(), m, n).noalias() =
        ConstRowMap(a.value().data(), m, k) * ConstRowMap(b.value().data(), k, n);
    Var inputs[] = {a, b};
    return a.tape().record(std::move(out), inputs, [a, b, m, k, n](Tape& tape, const Tensor& g) {
        ConstRowMap gm(g.data(), m, n);
        if (Tensor* da = tape.grad_buffer(a)) {
            RowMap(da->data(), m, k).noalias() += gm * ConstRowMap(tape.value(b).data(), k, n).transpose();
        }
        if (Tensor* db = tape.grad_buffer(b)) {
            RowMap(db->data(), k, n).noalias() += ConstRowMap(tape.value(a).data(), m, k).transpose() * gm;
        }
    });
}

Var dense(Var x, Var w, Var b) {
    require_rank("dense", x, 2);
    require_rank("dense", w, 2);
    const std::size_t n = x.shape()[0], k = x.shape()[1], o = w.shape()[1];
    if (w.shape()[0] != k || b.shape() != Shape{o}) {
        throw_shape_error("dense", {x.shape(), w.shape(), b.shape()});
    }
    Tensor out({n, o});
    RowMap om(out.data(), n, o);
    om.noalias() = ConstRowMap(x.value().data(), n, k) * ConstRowMap(w.value().data(), k, o);
    om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), o);
    Var inputs[] = {x, w, b};
    return x.tape().record(std::move(out), inputs, [x, w, b, n, k, o](Tape& tape, const Tensor& g) {
        ConstRowMap gm(g.data(), n, o);
        if (Tensor* dx = tape.grad_buffer(x)) {
            RowMap(dx->data(), n, k).noalias() += gm * ConstRowMap(tape.value(w).data(), k, o).transpose();
        }
        if (Tensor* dw = tape.grad_buffer(w)) {
            RowMap(dw->data(), k, o).noalias() += ConstRowMap(tape.value(x).data(), n, k).transpose() * gm;
        }
        if (Tensor* db = tape.grad_buffer(b)) {
            Eigen::Map<Eigen::RowVectorXd>(db->data(), o) += gm.colwise().sum();
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
    std::size_t patch() const { return c * kh * kw; }
    std::size_t positions() const { return ho * wo; }
};

// cols(r, n*P + p) holds input element r of the receptive field of output p.
void im2col(const ConvGeometry& g, const double* x, ColMatrix& cols) {
    const std::size_t rows = g.patch();
    cols.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(g.n * g.positions()));
    double* dst = cols.data();
    for (std::size_t n = 0; n < g.n; ++n) {
        const double* img = x + n * g.c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
                for (std::size_t c = 0; c < g.c; ++c) {
                    const double* plane = img + c * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                        const bool row_ok = iy >= 0 && iy < static_cast<long>(g.h);
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            *dst++ = (row_ok && ix >= 0 && ix < static_cast<long>(g.w))
                                         ? plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)]
                                         : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const ColMatrix& cols, double* dx) {
    const double* src = cols.data();
    for (std::size_t n = 0; n < g.n; ++n) {
        double* img = dx + n * g.c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
                for (std::size_t c = 0; c < g.c; ++c) {
                    double* plane = img + c * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                        const bool row_ok = iy >= 0 && iy < static_cast<long>(g.h);
                        for (std::size_t kx = 0; kx < g.kw; ++kx, ++src) {
                            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                            if (row_ok && ix >= 0 && ix < static_cast<long>(g.w)) {
                                plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] += *src;
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", w, 4);
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (stride == 0) throw_shape_error("conv2d", {xs, ws}, "stride must be positive");
    if (ws[1] != xs[1] || b.shape() != Shape{ws[0]}) {
        throw_shape_error("conv2d", {xs, ws, b.shape()}, "channel mismatch");
    }
    if (xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3]) {
        throw_shape_error("conv2d", {xs, ws}, "kernel does not fit padded input");
    }
    ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding, 0, 0};
    g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
    g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

    auto cols = std::make_shared<ColMatrix>();
    im2col(g, x.value().data(), *cols);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto o = static_cast<Eigen::Index>(g.o);
    ColMatrix y = ConstRowMap(w.value().data(), o, patch) * (*cols);

    const std::size_t P = g.positions();
    Tensor out({g.n, g.o, g.ho, g.wo});
    const double* bias = b.value().data();
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t oc = 0; oc < g.o; ++oc) {
            double* dst = out.data() + (n * g.o + oc) * P;
            for (std::size_t p = 0; p < P; ++p) {
                dst[p] = y(static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(n * P + p)) + bias[oc];
            }
        }
    }

    Var inputs[] = {x, w, b};
    return x.tape().record(std::move(out), inputs, [x, w, b, g, cols](Tape& tape, const Tensor& grad) {
        const std::size_t P = g.positions();
        const auto patch = static_cast<Eigen::Index>(g.patch());
        const auto o = static_cast<Eigen::Index>(g.o);
        ColMatrix dy(o, static_cast<Eigen::Index>(g.n * P));
        for (std::size_t n = 0; n < g.n; ++n) {
            for (std::size_t oc = 0; oc < g.o; ++oc) {
                const double* src = grad.data() + (n * g.o + oc) * P;
                for (std::size_t p = 0; p < P; ++p) {
                    dy(static_cast<Eigen::Index>(oc), static_cast<Eigen::Index>(n * P + p)) = src[p];
                }
            }
        }
        if (Tensor* dw = tape.grad_buffer(w)) {
            RowMap(dw->data(), o, patch).noalias() += dy * cols->transpose();
        }
        if (Tensor* db = tape.grad_buffer(b)) {
            Eigen::Map<Eigen::VectorXd>(db->data(), o) += dy.rowwise().sum();
        }
        if (Tensor* dx = tape.grad_buffer(x)) {
            ColMatrix dcols = ConstRowMap(tape.value(w).data(), o, patch).transpose() * dy;
            col2im_add(g, dcols, dx->data());
        }
    });
}

Var avg_pool(Var x, std::size_t window) {
    require_rank("avg_pool", x, 4);
    const Shape& s = x.shape();
    if (window == 0 || s[2] < window || s[3] < window) {
        throw_shape_error("avg_pool", {s}, "window " + std::to_string(window) + " does not fit");
    }
    const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
    const std::size_t ho = h / window, wo = w / window;
    const double inv = 1.0 / static_cast<double>(window * window);
    Tensor out({n, c, ho, wo});
    const double* in = x.value().data();
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < window; ++ky) {
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        acc += in[nc * h * w + (oy * window + ky) * w + ox * window + kx];
                    }
                }
                out[(nc * ho + oy) * wo + ox] = acc * inv;
            }
        }
    }
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [=](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        if (!dx) return;
        for (std::size_t nc = 0; nc < n * c; ++nc) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const double v = g[(nc * ho + oy) * wo + ox] * inv;
                    for (std::size_t ky = 0; ky < window; ++ky) {
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            (*dx)[nc * h * w + (oy * window + ky) * w + ox * window + kx] += v;
                        }
                    }
                }
            }
        }
    });
}

Var upsample_nearest(Var x, std::size_t factor) {
    require_rank("upsample", x, 4);
    if (factor == 0) throw_shape_error("upsample", {x.shape()}, "factor must be positive");
    const Shape& s = x.shape();
    const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
    const std::size_t ho = h * factor, wo = w * factor;
    Tensor out({s[0], s[1], ho, wo});
    const double* in = x.value().data();
    for (std::size_t p = 0; p < nc; ++p) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t xx = 0; xx < wo; ++xx) {
                out[(p * ho + y) * wo + xx] = in[(p * h + y / factor) * w + xx / factor];
            }
        }
    }
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [=](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        if (!dx) return;
        for (std::size_t p = 0; p < nc; ++p) {
            for (std::size_t y = 0; y < ho; ++y) {
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    (*dx)[(p * h + y / factor) * w + xx / factor] += g[(p * ho + y) * wo + xx];
                }
            }
        }
    });
}

Var concat_channels(Var a, Var b) {
    require_rank("concat_channels", a, 4);
    require_rank("concat_channels", b, 4);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) throw_shape_error("concat_channels", {sa, sb});
    const std::size_t n = sa[0], hw = sa[2] * sa[3], ca = sa[1], cb = sb[1];
    Tensor out({n, ca + cb, sa[2], sa[3]});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
        std::copy_n(b.value().data() + i * cb * hw, cb * hw, out.data() + i * (ca + cb) * hw + ca * hw);
    }
    Var inputs[] = {a, b};
    return a.tape().record(std::move(out), inputs, [=](Tape& tape, const Tensor& g) {
        if (Tensor* da = tape.grad_buffer(a)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < ca * hw; ++j) (*da)[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
            }
        }
        if (Tensor* db = tape.grad_buffer(b)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < cb * hw; ++j) {
                    (*db)[i * cb * hw + j] += g[i * (ca + cb) * hw + ca * hw + j];
                }
            }
        }
    });
}

Var relu(Var x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
    return unary(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

namespace {
double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
    return unary(x, stable_sigmoid, [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 - s);
    });
}

Var tanh(Var x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
    });
}

Var abs(Var x) {
    return unary(x, [](double v) { return std::abs(v); },
                 [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
    return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var sqrt(Var x) {
    return unary(x, [](double v) { return std::sqrt(std::max(v, 0.0)); },
                 [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

Var log_clamped(Var x, double eps) {
    return unary(x, [eps](double v) { return std::log(std::max(v, eps)); },
                 [eps](double v) { return v > eps ? 1.0 / v : 0.0; });
}

Var softmax(Var x) {
    require_rank("softmax", x, 2);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    Tensor out({n, k});
    const double* in = x.value().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = in + i * k;
        const double m = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += (out[i * k + j] = std::exp(row[j] - m));
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
    }
    auto probs = std::make_shared<const Tensor>(out);
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x, n, k, probs](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        if (!dx) return;
        const Tensor& yv = *probs;
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * yv[i * k + j];
            for (std::size_t j = 0; j < k; ++j) (*dx)[i * k + j] += yv[i * k + j] * (g[i * k + j] - dot);
        }
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x](Tape& tape, const Tensor& g) {
        if (Tensor* dx = tape.grad_buffer(x)) {
            for (std::size_t i = 0; i < g.numel(); ++i) (*dx)[i] += g[i];
        }
    });
}

Var flatten(Var x) {
    const Shape& s = x.shape();
    if (s.size() < 2) throw_shape_error("flatten", {s}, "expected a batch axis");
    return reshape(x, Shape{s[0], shape_numel(s) / s[0]});
}

Var pick(Var x, std::span<const std::size_t> index) {
    require_rank("pick", x, 2);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    if (index.size() != n) throw_shape_error("pick", {x.shape(), Shape{index.size()}}, "one index per row");
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        if (idx[i] >= k) throw_shape_error("pick", {x.shape()}, "index " + std::to_string(idx[i]) + " out of range");
        out[i] = x.value()[i * k + idx[i]];
    }
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x, idx, k](Tape& tape, const Tensor& g) {
        if (Tensor* dx = tape.grad_buffer(x)) {
            for (std::size_t i = 0; i < idx.size(); ++i) (*dx)[i * k + idx[i]] += g[i];
        }
    });
}

Var sum(Var x) {
    Tensor out = Tensor::scalar(x.value().sum());
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x](Tape& tape, const Tensor& g) {
        if (Tensor* dx = tape.grad_buffer(x)) {
            const double v = g[0];
            for (auto& e : dx->values()) e += v;
        }
    });
}

Var mean(Var x) {
    const double inv = 1.0 / static_cast<double>(x.value().numel());
    Tensor out = Tensor::scalar(x.value().sum() * inv);
    Var inputs[] = {x};
    return x.tape().record(std::move(out), inputs, [x, inv](Tape& tape, const Tensor& g) {
        if (Tensor* dx = tape.grad_buffer(x)) {
            const double v = g[0] * inv;
            for (auto& e : dx->values()) e += v;
        }
    });
}

}  // namespace ops
}  // namespace ganmex
