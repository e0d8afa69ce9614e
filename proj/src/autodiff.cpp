#include "featshield/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace featshield {

const Tensor& Var::value() const {
    if (!tape_) throw Error("Var: uninitialized handle");
    return tape_->value(id_);
}

Var Tape::push(Tensor value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backprop)});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::record(Tensor value, std::span<const Var> parents, Backprop backprop) {
    bool needs = false;
    for (const auto& p : parents) {
        if (&p.tape() != this) throw Error("Tape::record: parent belongs to another tape");
        needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backprop) : nullptr);
}

Tensor& Tape::grad_slot(Var v) {
    auto& node = nodes_.at(v.id());
    if (node.grad.size() == 0) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
}

void Tape::backward(Var root) {
    if (root.size() != 1) {
        throw Error("backward: root must be scalar, got shape " + shape_str(root.shape()));
    }
    for (auto& node : nodes_) node.grad = Tensor{};
    grad_slot(root)[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (node.backprop && node.grad.size() != 0) node.backprop(node.grad, *this);
    }
    has_backward_ = true;
}

const Tensor& Tape::grad(Var v) const {
    if (!has_backward_) throw Error("Tape::grad: no backward pass has run");
    auto& node = const_cast<Node&>(nodes_.at(v.id()));
    if (node.grad.size() == 0) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
}

namespace ops {
namespace {

bool is_scalar(const Var& v) { return v.size() == 1; }

void require_binary(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape() && !is_scalar(b)) {
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
    if (a.shape().size() != rank) {
        throw Error(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                    shape_str(a.shape()));
    }
}

/// Runs `fn(grad_slot)` only when `p` participates in differentiation.
template <class F>
void accumulate(Tape& tape, Var p, F&& fn) {
    if (tape.requires_grad(p)) fn(tape.grad_slot(p));
}

template <class F>
Var unary(Var a, F&& value_fn, std::function<double(double x, double y)> deriv) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = value_fn(x[i]);
    Var parents[] = {a};
    Tape& tape = a.tape();
    const std::size_t out_id = tape.size();
    return tape.record(std::move(y), parents, [a, out_id, deriv](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            const Tensor& xin = a.value();
            const Tensor& yout = t.value(out_id);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * deriv(xin[i], yout[i]);
        });
    });
}

}  // namespace

Var add(Var a, Var b) {
    require_binary("add", a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out(x.shape());
    const bool bs = x.shape() != y.shape();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[bs ? 0 : i];
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [a, b, bs](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i];
        });
        accumulate(t, b, [&](Tensor& g) {
            for (std::size_t i = 0; i < up.size(); ++i) g[bs ? 0 : i] += up[i];
        });
    });
}

Var sub(Var a, Var b) {
    require_binary("sub", a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out(x.shape());
    const bool bs = x.shape() != y.shape();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[bs ? 0 : i];
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [a, b, bs](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i];
        });
        accumulate(t, b, [&](Tensor& g) {
            for (std::size_t i = 0; i < up.size(); ++i) g[bs ? 0 : i] -= up[i];
        });
    });
}

Var mul(Var a, Var b) {
    require_binary("mul", a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out(x.shape());
    const bool bs = x.shape() != y.shape();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[bs ? 0 : i];
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [a, b, bs](const Tensor& up, Tape& t) {
        const Tensor& xv = a.value();
        const Tensor& yv = b.value();
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * yv[bs ? 0 : i];
        });
        accumulate(t, b, [&](Tensor& g) {
            for (std::size_t i = 0; i < up.size(); ++i) g[bs ? 0 : i] += up[i] * xv[i];
        });
    });
}

Var div(Var a, Var b) {
    require_binary("div", a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const bool bs = x.shape() != y.shape();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = y[bs ? 0 : i];
        if (d == 0.0) throw Error("div: division by zero");
        out[i] = x[i] / d;
    }
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [a, b, bs](const Tensor& up, Tape& t) {
        const Tensor& xv = a.value();
        const Tensor& yv = b.value();
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] / yv[bs ? 0 : i];
        });
        accumulate(t, b, [&](Tensor& g) {
            for (std::size_t i = 0; i < up.size(); ++i) {
                const double d = yv[bs ? 0 : i];
                g[bs ? 0 : i] -= up[i] * xv[i] / (d * d);
            }
        });
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_const(Var a, const Tensor& c) {
    require_same_shape("add_const", a.shape(), c.shape());
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + c[i];
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents, [a](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i];
        });
    });
}

Var mask_mul(Var a, const Tensor& mask) {
    require_same_shape("mask_mul", a.shape(), mask.shape());
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents, [a, mask](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * mask[i];
        });
    });
}

Var matmul(Var a, Var b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Tensor out({m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = &out[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            if (xv == 0.0) continue;
            const double* yrow = y.values().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
        }
    }
    Var parents[] = {a, b};
    return a.tape().record(std::move(out), parents, [a, b, m, k, n](const Tensor& up, Tape& t) {
        const Tensor& xv = a.value();
        const Tensor& yv = b.value();
        // dA = up * B^T
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* urow = up.values().data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* yrow = yv.values().data() + p * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += urow[j] * yrow[j];
                    g[i * k + p] += s;
                }
            }
        });
        // dB = A^T * up
        accumulate(t, b, [&](Tensor& g) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* urow = up.values().data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double xval = xv[i * k + p];
                    if (xval == 0.0) continue;
                    double* grow = &g[p * n];
                    for (std::size_t j = 0; j < n; ++j) grow[j] += xval * urow[j];
                }
            }
        });
    });
}

Var add_row_bias(Var x, Var bias) {
    require_rank("add_row_bias", x, 2);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (bias.size() != n) {
        throw Error("add_row_bias: shape mismatch " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
    }
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
    Var parents[] = {x, bias};
    return x.tape().record(std::move(out), parents, [x, bias, m, n](const Tensor& up, Tape& t) {
        accumulate(t, x, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i];
        });
        accumulate(t, bias, [&](Tensor& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += up[i * n + j];
        });
    });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double v : a.value().values()) {
        if (!(v > 0.0)) throw Error("log: non-positive input " + std::to_string(v));
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
    if (lo > hi) throw Error("clamp: lo > hi");
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    Var parents[] = {a};
    return a.tape().record(Tensor::scalar(s), parents, [a](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[0];
        });
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var l2norm(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v * v;
    const double norm = std::sqrt(s);
    Var parents[] = {a};
    return a.tape().record(Tensor::scalar(norm), parents, [a, norm](const Tensor& up, Tape& t) {
        if (norm == 0.0) throw Error("l2norm: gradient undefined at the zero vector");
        accumulate(t, a, [&](Tensor& g) {
            const Tensor& x = a.value();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[0] * x[i] / norm;
        });
    });
}

Var l2norm_axis(Var a, std::size_t axis) {
    require_rank("l2norm_axis", a, 2);
    if (axis > 1) throw Error("l2norm_axis: axis must be 0 or 1");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    const Tensor& x = a.value();
    const std::size_t count = axis == 1 ? m : n;
    Tensor out({count}, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[axis == 1 ? i : j] += x[i * n + j] * x[i * n + j];
    for (auto& v : out.values()) v = std::sqrt(v);
    Var parents[] = {a};
    const Tape& tape = a.tape();
    const std::size_t out_id = tape.size();
    return a.tape().record(std::move(out), parents, [a, axis, m, n, out_id](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            const Tensor& xv = a.value();
            const Tensor& norms = t.value(out_id);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t r = axis == 1 ? i : j;
                    if (norms[r] == 0.0) throw Error("l2norm_axis: gradient undefined at a zero slice");
                    g[i * n + j] += up[r] * xv[i * n + j] / norms[r];
                }
            }
        });
    });
}

Var mean_rows(Var a) {
    require_rank("mean_rows", a, 2);
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    const Tensor& x = a.value();
    Tensor out({n}, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
    const double inv = 1.0 / static_cast<double>(m);
    for (auto& v : out.values()) v *= inv;
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents, [a, m, n, inv](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += up[j] * inv;
        });
    });
}

Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents, [a](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i];
        });
    });
}

Var gather(Var a, std::vector<std::ptrdiff_t> index, Shape out_shape) {
    if (shape_numel(out_shape) != index.size()) {
        throw Error("gather: index count " + std::to_string(index.size()) + " does not match shape " +
                    shape_str(out_shape));
    }
    const Tensor& x = a.value();
    Tensor out(out_shape, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto src = index[i];
        if (src >= static_cast<std::ptrdiff_t>(x.size())) throw Error("gather: index out of range");
        if (src >= 0) out[i] = x[static_cast<std::size_t>(src)];
    }
    Var parents[] = {a};
    return a.tape().record(std::move(out), parents, [a, index = std::move(index)](const Tensor& up, Tape& t) {
        accumulate(t, a, [&](Tensor& g) {
            for (std::size_t i = 0; i < index.size(); ++i) {
                if (index[i] >= 0) g[static_cast<std::size_t>(index[i])] += up[i];
            }
        });
    });
}

Var slice2d(Var img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    require_rank("slice2d", img, 3);
    const std::size_t H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
    if (h == 0 || w == 0 || top + h > H || left + w > W) {
        throw Error("slice2d: window out of bounds for shape " + shape_str(img.shape()));
    }
    std::vector<std::ptrdiff_t> index;
    index.reserve(h * w * C);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            for (std::size_t ch = 0; ch < C; ++ch)
                index.push_back(static_cast<std::ptrdiff_t>(((top + r) * W + (left + c)) * C + ch));
    return gather(img, std::move(index), {h, w, C});
}

Var pad2d(Var img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    require_rank("pad2d", img, 3);
    const std::size_t h = img.shape()[0], w = img.shape()[1], C = img.shape()[2];
    if (top + h > height || left + w > width) {
        throw Error("pad2d: shape " + shape_str(img.shape()) + " does not fit the canvas");
    }
    std::vector<std::ptrdiff_t> index(height * width * C, -1);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            for (std::size_t ch = 0; ch < C; ++ch)
                index[((top + r) * width + (left + c)) * C + ch] = static_cast<std::ptrdiff_t>((r * w + c) * C + ch);
    return gather(img, std::move(index), {height, width, C});
}

Var patchify(Var img, std::size_t patch) {
    require_rank("patchify", img, 3);
    const std::size_t H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
    if (patch == 0 || H % patch != 0 || W % patch != 0) {
        throw Error("patchify: patch " + std::to_string(patch) + " does not tile shape " + shape_str(img.shape()));
    }
    const std::size_t ph = H / patch, pw = W / patch;
    std::vector<std::ptrdiff_t> index;
    index.reserve(H * W * C);
    for (std::size_t py = 0; py < ph; ++py)
        for (std::size_t px = 0; px < pw; ++px)
            for (std::size_t r = 0; r < patch; ++r)
                for (std::size_t c = 0; c < patch; ++c)
                    for (std::size_t ch = 0; ch < C; ++ch)
                        index.push_back(
                            static_cast<std::ptrdiff_t>(((py * patch + r) * W + (px * patch + c)) * C + ch));
    return gather(img, std::move(index), {ph * pw, patch * patch * C});
}

Var conv2d_fixed(Var img, const Tensor& kernel) {
    require_rank("conv2d_fixed", img, 3);
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
        throw Error("conv2d_fixed: kernel must be odd and square, got " + shape_str(kernel.shape()));
    }
    const std::size_t H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
    const auto K = static_cast<std::ptrdiff_t>(kernel.dim(0));
    const std::ptrdiff_t half = K / 2;
    auto clampi = [](std::ptrdiff_t v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    // Visits (output index, input index, weight) triples; shared by forward and backward.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::ptrdiff_t ky = 0; ky < K; ++ky)
                    for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
                        const std::size_t sy = clampi(static_cast<std::ptrdiff_t>(y) + ky - half, H);
                        const std::size_t sx = clampi(static_cast<std::ptrdiff_t>(x) + kx - half, W);
                        const double w = kernel[static_cast<std::size_t>(ky * K + kx)];
                        for (std::size_t ch = 0; ch < C; ++ch) fn((y * W + x) * C + ch, (sy * W + sx) * C + ch, w);
                    }
    };
    const Tensor& xv = img.value();
    Tensor out(img.shape(), 0.0);
    for_each_tap([&](std::size_t o, std::size_t i, double w) { out[o] += w * xv[i]; });
    Var parents[] = {img};
    return img.tape().record(std::move(out), parents, [img, for_each_tap](const Tensor& up, Tape& t) {
        accumulate(t, img, [&](Tensor& g) { for_each_tap([&](std::size_t o, std::size_t i, double w) { g[i] += w * up[o]; }); });
    });
}

namespace {

struct Interp {
    std::size_t i0, i1;
    double w1;
};

std::vector<Interp> bilinear_axis(std::size_t in, std::size_t out) {
    std::vector<Interp> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(src));
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace

Var resize_bilinear(Var img, std::size_t out_h, std::size_t out_w) {
    require_rank("resize_bilinear", img, 3);
    if (out_h == 0 || out_w == 0) throw Error("resize_bilinear: zero output size");
    const std::size_t H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
    auto rows = bilinear_axis(H, out_h);
    auto cols = bilinear_axis(W, out_w);
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& ry = rows[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& cx = cols[x];
                const std::size_t srcs[4] = {ry.i0 * W + cx.i0, ry.i0 * W + cx.i1, ry.i1 * W + cx.i0,
                                             ry.i1 * W + cx.i1};
                const double ws[4] = {(1 - ry.w1) * (1 - cx.w1), (1 - ry.w1) * cx.w1, ry.w1 * (1 - cx.w1),
                                      ry.w1 * cx.w1};
                for (int k = 0; k < 4; ++k) {
                    if (ws[k] == 0.0) continue;
                    for (std::size_t ch = 0; ch < C; ++ch) fn((y * out_w + x) * C + ch, srcs[k] * C + ch, ws[k]);
                }
            }
        }
    };
    const Tensor& xv = img.value();
    Tensor out({out_h, out_w, C}, 0.0);
    for_each_tap([&](std::size_t o, std::size_t i, double w) { out[o] += w * xv[i]; });
    Var parents[] = {img};
    return img.tape().record(std::move(out), parents, [img, for_each_tap](const Tensor& up, Tape& t) {
        accumulate(t, img, [&](Tensor& g) { for_each_tap([&](std::size_t o, std::size_t i, double w) { g[i] += w * up[o]; }); });
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    require_rank("softmax_cross_entropy", logits, 2);
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (labels.size() != n) throw Error("softmax_cross_entropy: label count does not match batch size");
    const Tensor& z = logits.value();
    Tensor probs({n, c});
    std::vector<int> lab(labels.begin(), labels.end());
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= c) throw Error("softmax_cross_entropy: label out of range");
        double mx = z[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[i * c + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(z[i * c + j] - mx);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(z[i * c + j] - mx) / s;
        loss += -(z[i * c + static_cast<std::size_t>(lab[i])] - mx - std::log(s));
    }
    loss /= static_cast<double>(n);
    Var parents[] = {logits};
    return logits.tape().record(Tensor::scalar(loss), parents,
                                [logits, probs = std::move(probs), lab = std::move(lab), n, c](const Tensor& up, Tape& t) {
                                    accumulate(t, logits, [&](Tensor& g) {
                                        const double s = up[0] / static_cast<double>(n);
                                        for (std::size_t i = 0; i < n; ++i)
                                            for (std::size_t j = 0; j < c; ++j) {
                                                const double target = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                                                g[i * c + j] += s * (probs[i * c + j] - target);
                                            }
                                    });
                                });
}

}  // namespace ops
}  // namespace featshield
