#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "featshield/tensor.hpp"

namespace featshield {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    std::size_t id() const { return id_; }
    Tape& tape() const { return *tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so creation
/// order is a topological order and backward is a single reverse sweep.
/// A tape is meant to be rebuilt for every evaluation; it is not thread-safe.
class Tape {
public:
    /// Called during backward with the node's accumulated gradient.
    using Backprop = std::function<void(const Tensor& upstream, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf.
    Var variable(Tensor value);
    /// Leaf excluded from differentiation.
    Var constant(Tensor value);

    /// Records an op result. `backprop` is dropped when no parent needs a gradient.
    Var record(Tensor value, std::span<const Var> parents, Backprop backprop);

    /// Seeds d(root)/d(root) = 1 and propagates to every node. Root must be scalar.
    void backward(Var root);

    /// Gradient of the last backward root w.r.t. `v`. Zero for nodes the root does not reach.
    const Tensor& grad(Var v) const;

    bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    std::size_t size() const { return nodes_.size(); }

    /// Mutable gradient accumulator of `v`, allocated as zeros on first use.
    Tensor& grad_slot(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Backprop backprop;
    };

    Var push(Tensor value, bool requires_grad, Backprop backprop);

    std::vector<Node> nodes_;
    bool has_backward_ = false;
};

/// Differentiable operations. Binary elementwise ops accept either equal
/// shapes or a one-element right operand; there is no other broadcasting.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Adds a constant tensor of the same shape.
Var add_const(Var a, const Tensor& c);
/// Elementwise product with a constant mask.
Var mask_mul(Var a, const Tensor& mask);

/// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
/// [m,n] + bias [n] added to every row.
Var add_row_bias(Var x, Var bias);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
/// Clamps into [lo, hi]; gradient passes where the input lies in the closed interval.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
/// Euclidean norm of all entries.
Var l2norm(Var a);
/// Row norms (axis 1) or column norms (axis 0) of a matrix.
Var l2norm_axis(Var a, std::size_t axis);
/// Mean over the rows of a matrix: [m,n] -> [n].
Var mean_rows(Var a);

Var reshape(Var a, Shape shape);
/// out[i] = a[index[i]], or 0 where index[i] < 0. Backward scatters.
Var gather(Var a, std::vector<std::ptrdiff_t> index, Shape out_shape);

/// Window [top, top+h) x [left, left+w) of an [H,W,C] image.
Var slice2d(Var img, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
/// Places an [h,w,C] image at (top,left) inside a zero [H,W,C] canvas.
Var pad2d(Var img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
/// Splits an [H,W,C] image into non-overlapping PxP patches -> [(H/P)(W/P), P*P*C].
Var patchify(Var img, std::size_t patch);

/// Per-channel 2D correlation of an [H,W,C] image with a fixed odd KxK kernel,
/// borders replicated.
Var conv2d_fixed(Var img, const Tensor& kernel);
/// Bilinear resample of an [H,W,C] image to [out_h,out_w,C] (half-pixel centers).
Var resize_bilinear(Var img, std::size_t out_h, std::size_t out_w);

/// Mean softmax cross-entropy of [N,C] logits against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ops

}  // namespace featshield
