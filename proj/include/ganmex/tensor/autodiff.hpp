#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ganmex/tensor/tensor.hpp"

namespace ganmex {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    bool valid() const noexcept { return tape_ != nullptr; }
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations evaluate eagerly and append a node; nodes are
/// stored in creation order, which is a topological order of the graph.
class Tape {
public:
    /// Propagates the adjoint of a node to its inputs via Tape::accumulate.
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var variable(Tensor value);
    Var constant(Tensor value);

    /// Appends an op node. The backward closure is dropped when no input needs a gradient.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds the scalar root with adjoint 1 and sweeps the tape backwards.
    void backward(Var root);
    /// Vector-Jacobian product: seeds `root` with an arbitrary adjoint of its shape.
    void backward(Var root, const Tensor& seed);

    /// Accumulated adjoint; zeros when no gradient reached the node.
    Tensor grad(Var v) const;
    void zero_grad();

    void accumulate(Var v, const Tensor& g);
    /// Mutable adjoint buffer (allocated on demand) for ops that scatter into it.
    Tensor* grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    void sweep(std::size_t root_id);

    std::vector<Node> nodes_;
};

/// Gradients of a scalar root with respect to each requested node.
std::vector<Tensor> backward_grad(Var root, std::span<const Var> wrt);

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// 1 - a
Var one_minus(Var a);

Var matmul(Var a, Var b);
/// x[N,K] * w[K,O] + b[O]
Var dense(Var x, Var w, Var b);
/// Cross-correlation. x[N,C,H,W], w[O,C,KH,KW], b[O]; zero padding.
Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding);
/// Non-overlapping average pooling with a square window (stride = window).
Var avg_pool(Var x, std::size_t window);
Var upsample_nearest(Var x, std::size_t factor);
Var concat_channels(Var a, Var b);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var tanh(Var x);
Var abs(Var x);
Var square(Var x);
Var sqrt(Var x);
/// log(clamp(x, eps, inf)); the gradient is zero where the clamp is active.
Var log_clamped(Var x, double eps);
/// Row-wise softmax of a [N,K] tensor.
Var softmax(Var x);

Var reshape(Var x, Shape shape);
/// [N, ...] -> [N, prod(...)]
Var flatten(Var x);
/// out[n] = x[n, index[n]] for a [N,K] tensor.
Var pick(Var x, std::span<const std::size_t> index);

Var sum(Var x);
Var mean(Var x);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(Var a, double s) { return ops::scale(a, s); }
inline Var operator*(double s, Var a) { return ops::scale(a, s); }

}  // namespace ganmex
