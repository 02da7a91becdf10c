#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation
// on an explicit tape, plus SGD with momentum. Row-major storage, no
// broadcasting; shapes are checked eagerly at op call time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace medaf {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

struct TensorStorage {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first needed
};

// Value-semantic handle over shared storage. Copies alias the same buffer,
// which is what lets the tape accumulate gradients into parameters the
// caller still holds.
class Tensor {
public:
    Tensor() : s_(std::make_shared<TensorStorage>()) {}

    explicit Tensor(Shape shape, double fill = 0.0) : s_(std::make_shared<TensorStorage>()) {
        s_->shape = std::move(shape);
        s_->data.assign(shape_numel(s_->shape), fill);
    }

    static Tensor from(Shape shape, std::vector<double> values) {
        Tensor t;
        std::size_t n = shape_numel(shape);
        if (values.size() != n)
            throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(shape));
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(values);
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    // Accessors are const-qualified but hand out mutable references: a Tensor
    // is a shared handle, and copies alias the same storage.
    const Shape& shape() const { return s_->shape; }
    std::size_t numel() const { return s_->data.size(); }
    std::vector<double>& data() const { return s_->data; }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool v) const { s_->requires_grad = v; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<double>& grad() const {
        ensure_grad();
        return s_->grad;
    }
    void ensure_grad() const {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
    }
    void zero_grad() const {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
    }

    double value() const {
        if (numel() != 1) throw std::logic_error("value() requires a scalar tensor");
        return s_->data[0];
    }

    bool all_finite() const {
        for (double v : s_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    TensorStorage* storage() const { return s_.get(); }

private:
    std::shared_ptr<TensorStorage> s_;
};

// Records every differentiable op in execution order. Execution order is a
// topological order by construction, so one reverse sweep suffices.
// A tape is confined to one thread.
class Tape {
public:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;  // reads output grad, accumulates into input grads
    };

    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
        outputs_.insert(output.storage());
        nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
    }

    std::size_t size() const { return nodes_.size(); }

    bool is_output(const Tensor& t) const { return outputs_.count(t.storage()) > 0; }

    // Populates dLoss/dLeaf for every leaf reachable from `loss`. Leaf grads
    // accumulate across repeated calls; intermediate grads are reset each call.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1) throw std::logic_error("backward requires a scalar loss");
        for (auto& node : nodes_) {
            node.output.ensure_grad();
            if (outputs_.count(node.output.storage())) node.output.zero_grad();
            for (auto& in : node.inputs) in.ensure_grad();
        }
        Tensor seed = loss;
        seed.ensure_grad();
        seed.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    }

    void clear() {
        nodes_.clear();
        outputs_.clear();
    }

private:
    std::vector<Node> nodes_;
    std::unordered_set<TensorStorage*> outputs_;
};

namespace ops {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    tape.record({a, b}, out, [a, b, out]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i) {
            a.grad()[i] += out.grad()[i];
            b.grad()[i] += out.grad()[i];
        }
    });
    return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    tape.record({a, b}, out, [a, b, out]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i) {
            a.grad()[i] += out.grad()[i];
            b.grad()[i] -= out.grad()[i];
        }
    });
    return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    tape.record({a, b}, out, [a, b, out]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i) {
            a.grad()[i] += out.grad()[i] * b.data()[i];
            b.grad()[i] += out.grad()[i] * a.data()[i];
        }
    });
    return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * c;
    tape.record({a}, out, [a, out, c]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i) a.grad()[i] += out.grad()[i] * c;
    });
    return out;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::scalar(std::accumulate(a.data().begin(), a.data().end(), 0.0));
    tape.record({a}, out, [a, out]() mutable {
        double g = out.grad()[0];
        for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += g;
    });
    return out;
}

inline Tensor mean_all(Tape& tape, const Tensor& a) {
    double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::scalar(std::accumulate(a.data().begin(), a.data().end(), 0.0) * inv);
    tape.record({a}, out, [a, out, inv]() mutable {
        double g = out.grad()[0] * inv;
        for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += g;
    });
    return out;
}

// out = a - s, s scalar broadcast over every element of a.
inline Tensor sub_scalar(Tape& tape, const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("sub_scalar: second argument must be scalar");
    Tensor out(a.shape());
    double sv = s.data()[0];
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - sv;
    tape.record({a, s}, out, [a, s, out]() mutable {
        double acc = 0.0;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            a.grad()[i] += out.grad()[i];
            acc += out.grad()[i];
        }
        s.grad()[0] -= acc;
    });
    return out;
}

// out = a * s, s a scalar tensor.
inline Tensor mul_scalar(Tape& tape, const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("mul_scalar: second argument must be scalar");
    Tensor out(a.shape());
    double sv = s.data()[0];
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * sv;
    tape.record({a, s}, out, [a, s, out]() mutable {
        double sv2 = s.data()[0], acc = 0.0;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            a.grad()[i] += out.grad()[i] * sv2;
            acc += out.grad()[i] * a.data()[i];
        }
        s.grad()[0] += acc;
    });
    return out;
}

// out = 1 / max(x, eps), scalar. Below the clamp the output is constant, so
// no gradient flows.
inline Tensor reciprocal_clamped(Tape& tape, const Tensor& x, double eps) {
    if (x.numel() != 1) throw std::invalid_argument("reciprocal_clamped: scalar expected");
    double xv = x.data()[0];
    Tensor out = Tensor::scalar(1.0 / std::max(xv, eps));
    tape.record({x}, out, [x, out, eps]() mutable {
        double xv2 = x.data()[0];
        if (xv2 > eps) x.grad()[0] -= out.grad()[0] / (xv2 * xv2);
    });
    return out;
}

// Safe sqrt: forward is exact, backward clamps the denominator so a zero
// input with zero incoming gradient stays zero instead of producing NaN.
inline Tensor sqrt_safe(Tape& tape, const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x.data()[i] < 0.0) throw std::invalid_argument("sqrt_safe: negative input");
        out.data()[i] = std::sqrt(x.data()[i]);
    }
    tape.record({x}, out, [x, out]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i)
            x.grad()[i] += out.grad()[i] / (2.0 * std::max(out.data()[i], 1e-12));
    });
    return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = std::max(0.0, a.data()[i]);
    // subgradient at 0 is 0
    tape.record({a}, out, [a, out]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i)
            if (a.data()[i] > 0.0) a.grad()[i] += out.grad()[i];
    });
    return out;
}

inline Tensor index(Tape& tape, const Tensor& v, int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= v.numel())
        throw std::invalid_argument("index out of range");
    Tensor out = Tensor::scalar(v.data()[i]);
    tape.record({v}, out, [v, out, i]() mutable { v.grad()[i] += out.grad()[0]; });
    return out;
}

// Channel k of a [K,H,W] map, as [H,W].
inline Tensor channel_slice(Tape& tape, const Tensor& m, int k) {
    if (m.shape().size() != 3) throw std::invalid_argument("channel_slice: [K,H,W] expected");
    int K = m.shape()[0], H = m.shape()[1], W = m.shape()[2];
    if (k < 0 || k >= K) throw std::invalid_argument("channel_slice: channel out of range");
    Tensor out({H, W});
    std::size_t off = static_cast<std::size_t>(k) * H * W;
    std::copy_n(m.data().begin() + off, static_cast<std::size_t>(H) * W, out.data().begin());
    tape.record({m}, out, [m, out, off]() mutable {
        for (std::size_t i = 0; i < out.numel(); ++i) m.grad()[off + i] += out.grad()[i];
    });
    return out;
}

// [K,H,W] -> [K], per-channel spatial mean.
inline Tensor global_average_pool(Tape& tape, const Tensor& m) {
    if (m.shape().size() != 3) throw std::invalid_argument("global_average_pool: [K,H,W] expected");
    int K = m.shape()[0], H = m.shape()[1], W = m.shape()[2];
    std::size_t hw = static_cast<std::size_t>(H) * W;
    if (hw == 0) throw std::invalid_argument("global_average_pool: empty spatial extent");
    Tensor out({K});
    double inv = 1.0 / static_cast<double>(hw);
    for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += m.data()[k * hw + i];
        out.data()[k] = acc * inv;
    }
    tape.record({m}, out, [m, out, K, hw, inv]() mutable {
        for (int k = 0; k < K; ++k) {
            double g = out.grad()[k] * inv;
            for (std::size_t i = 0; i < hw; ++i) m.grad()[k * hw + i] += g;
        }
    });
    return out;
}

// weight[O,D] * input[D] + bias[O]
inline Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.shape().size() != 1 || weight.shape().size() != 2 || bias.shape().size() != 1)
        throw std::invalid_argument("linear: expected input[D], weight[O,D], bias[O]");
    int D = input.shape()[0], O = weight.shape()[0];
    if (weight.shape()[1] != D || bias.shape()[0] != O)
        throw std::invalid_argument("linear: dimension mismatch");
    Tensor out({O});
    for (int o = 0; o < O; ++o) {
        double acc = bias.data()[o];
        const double* wrow = weight.data().data() + static_cast<std::size_t>(o) * D;
        for (int d = 0; d < D; ++d) acc += wrow[d] * input.data()[d];
        out.data()[o] = acc;
    }
    tape.record({input, weight, bias}, out, [input, weight, bias, out, O, D]() mutable {
        for (int o = 0; o < O; ++o) {
            double g = out.grad()[o];
            bias.grad()[o] += g;
            const double* wrow = weight.data().data() + static_cast<std::size_t>(o) * D;
            double* gwrow = weight.grad().data() + static_cast<std::size_t>(o) * D;
            for (int d = 0; d < D; ++d) {
                input.grad()[d] += g * wrow[d];
                gwrow[d] += g * input.data()[d];
            }
        }
    });
    return out;
}

// Max-subtracted softmax over a vector.
inline Tensor softmax(Tape& tape, const Tensor& logits) {
    if (logits.shape().size() != 1) throw std::invalid_argument("softmax: vector expected");
    int K = logits.shape()[0];
    Tensor out({K});
    double mx = *std::max_element(logits.data().begin(), logits.data().end());
    double denom = 0.0;
    for (int k = 0; k < K; ++k) {
        out.data()[k] = std::exp(logits.data()[k] - mx);
        denom += out.data()[k];
    }
    for (int k = 0; k < K; ++k) out.data()[k] /= denom;
    tape.record({logits}, out, [logits, out, K]() mutable {
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += out.grad()[k] * out.data()[k];
        for (int k = 0; k < K; ++k)
            logits.grad()[k] += out.data()[k] * (out.grad()[k] - dot);
    });
    return out;
}

// -log softmax(logits)[label] via log-sum-exp.
inline Tensor cross_entropy(Tape& tape, const Tensor& logits, int label) {
    if (logits.shape().size() != 1) throw std::invalid_argument("cross_entropy: vector expected");
    int K = logits.shape()[0];
    if (label < 0 || label >= K) throw std::invalid_argument("cross_entropy: label out of range");
    double mx = *std::max_element(logits.data().begin(), logits.data().end());
    double lse = 0.0;
    for (int k = 0; k < K; ++k) lse += std::exp(logits.data()[k] - mx);
    lse = mx + std::log(lse);
    Tensor out = Tensor::scalar(lse - logits.data()[label]);
    tape.record({logits}, out, [logits, out, K, label, mx, lse]() mutable {
        double g = out.grad()[0];
        for (int k = 0; k < K; ++k) {
            double p = std::exp(logits.data()[k] - lse);
            logits.grad()[k] += g * (p - (k == label ? 1.0 : 0.0));
        }
    });
    return out;
}

// input[Cin,H,W] (*) kernel[Cout,Cin,kh,kw], zero padding.
inline Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, int stride,
                     int padding) {
    if (input.shape().size() != 3 || kernel.shape().size() != 4)
        throw std::invalid_argument("conv2d: expected input[C,H,W], kernel[O,C,kh,kw]");
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    int Cin = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    int Cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
    if (kernel.shape()[1] != Cin)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(Cin) +
                                    " do not match kernel " + std::to_string(kernel.shape()[1]));
    if (kh > H + 2 * padding || kw > W + 2 * padding)
        throw std::invalid_argument("conv2d: kernel exceeds padded input extent");
    int Ho = (H + 2 * padding - kh) / stride + 1;
    int Wo = (W + 2 * padding - kw) / stride + 1;
    Tensor out({Cout, Ho, Wo});

    const double* in = input.data().data();
    const double* kn = kernel.data().data();
    double* o = out.data().data();
    for (int co = 0; co < Cout; ++co)
        for (int ci = 0; ci < Cin; ++ci) {
            const double* kbase = kn + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
            const double* ibase = in + static_cast<std::size_t>(ci) * H * W;
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = 0.0;
                    int iy0 = oy * stride - padding, ix0 = ox * stride - padding;
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = iy0 + ky;
                        if (iy < 0 || iy >= H) continue;
                        const double* irow = ibase + static_cast<std::size_t>(iy) * W;
                        const double* krow = kbase + static_cast<std::size_t>(ky) * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ix0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += irow[ix] * krow[kx];
                        }
                    }
                    o[(static_cast<std::size_t>(co) * Ho + oy) * Wo + ox] += acc;
                }
        }

    tape.record({input, kernel}, out,
                [input, kernel, out, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, padding]() mutable {
                    const double* in = input.data().data();
                    const double* kn = kernel.data().data();
                    const double* go = out.grad().data();
                    double* gi = input.grad().data();
                    double* gk = kernel.grad().data();
                    for (int co = 0; co < Cout; ++co)
                        for (int ci = 0; ci < Cin; ++ci) {
                            const double* kbase =
                                kn + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                            double* gkbase =
                                gk + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                            const double* ibase = in + static_cast<std::size_t>(ci) * H * W;
                            double* gibase = gi + static_cast<std::size_t>(ci) * H * W;
                            for (int oy = 0; oy < Ho; ++oy)
                                for (int ox = 0; ox < Wo; ++ox) {
                                    double g =
                                        go[(static_cast<std::size_t>(co) * Ho + oy) * Wo + ox];
                                    if (g == 0.0) continue;
                                    int iy0 = oy * stride - padding, ix0 = ox * stride - padding;
                                    for (int ky = 0; ky < kh; ++ky) {
                                        int iy = iy0 + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (int kx = 0; kx < kw; ++kx) {
                                            int ix = ix0 + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            gibase[static_cast<std::size_t>(iy) * W + ix] +=
                                                g * kbase[static_cast<std::size_t>(ky) * kw + kx];
                                            gkbase[static_cast<std::size_t>(ky) * kw + kx] +=
                                                g * ibase[static_cast<std::size_t>(iy) * W + ix];
                                        }
                                    }
                                }
                        }
                });
    return out;
}

// x[C,H,W] + b[C] broadcast over the spatial extent.
inline Tensor add_channel_bias(Tape& tape, const Tensor& x, const Tensor& b) {
    if (x.shape().size() != 3 || b.shape().size() != 1 || b.shape()[0] != x.shape()[0])
        throw std::invalid_argument("add_channel_bias: expected x[C,H,W], b[C]");
    int C = x.shape()[0];
    std::size_t hw = x.numel() / C;
    Tensor out(x.shape());
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out.data()[c * hw + i] = x.data()[c * hw + i] + b.data()[c];
    tape.record({x, b}, out, [x, b, out, C, hw]() mutable {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                x.grad()[c * hw + i] += out.grad()[c * hw + i];
                acc += out.grad()[c * hw + i];
            }
            b.grad()[c] += acc;
        }
    });
    return out;
}

// Cosine similarity of the flattened tensors with an eps-clamped denominator:
// an all-zero input yields 0 rather than NaN.
inline Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b,
                                double eps = 1e-8) {
    check_same_shape(a, b, "cosine_similarity");
    Tensor dot = sum(tape, mul(tape, a, b));
    Tensor na = sqrt_safe(tape, sum(tape, mul(tape, a, a)));
    Tensor nb = sqrt_safe(tape, sum(tape, mul(tape, b, b)));
    Tensor denom = mul(tape, na, nb);
    return mul(tape, dot, reciprocal_clamped(tape, denom, eps));
}

}  // namespace ops

// SGD with momentum: v <- m*v + g; p <- p - lr*v; grads are zeroed after the
// step. Velocity buffers are keyed by parameter storage and persist.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum)
        : learning_rate_(learning_rate), momentum_(momentum) {
        if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("momentum must be in [0,1)");
    }

    double learning_rate() const { return learning_rate_; }
    void set_learning_rate(double lr) {
        if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
        learning_rate_ = lr;
    }
    double momentum() const { return momentum_; }

    void step(std::vector<Tensor>& params) {
        for (auto& p : params) {
            if (!p.has_grad())
                throw std::logic_error("sgd_step: parameter has no populated gradient");
            auto& v = velocity_[p.storage()];
            if (v.empty()) v.assign(p.numel(), 0.0);
            for (std::size_t i = 0; i < p.numel(); ++i) {
                v[i] = momentum_ * v[i] + p.grad()[i];
                p.data()[i] -= learning_rate_ * v[i];
            }
            p.zero_grad();
        }
    }

private:
    double learning_rate_;
    double momentum_;
    std::unordered_map<TensorStorage*, std::vector<double>> velocity_;
};

}  // namespace medaf
