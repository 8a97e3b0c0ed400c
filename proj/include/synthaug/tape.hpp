// Reverse-mode autodiff. A Tape owns one step's computation: ops append
// nodes in execution order, each node keeps its value plus a backward rule,
// and backward() walks the records in reverse so consumers are visited
// before producers. Tapes are single-use: build, backward, discard.
//
// Gradients only flow where they are needed — a node requires a gradient
// iff recording is on and one of its inputs does — so frozen parameters and
// raw data inputs skip their gradient kernels entirely.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "synthaug/kernels.hpp"
#include "synthaug/tensor.hpp"

namespace synthaug {

struct Var {
    std::size_t id = std::size_t(-1);
    bool valid() const { return id != std::size_t(-1); }
};

template <typename Real>
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Var leaf(Tensor<Real> value, bool requires_grad = false) {
        return push(std::move(value), requires_grad && recording_, {}, nullptr);
    }

    const Tensor<Real>& value(Var v) const { return nodes_[v.id].value; }

    Real scalar(Var v) const {
        if (nodes_[v.id].value.numel() != 1) throw ValueError("scalar() on a non-scalar node");
        return nodes_[v.id].value[0];
    }

    // Zero tensor when nothing reached the node.
    Tensor<Real> grad(Var v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.numel() == 0) return Tensor<Real>(n.value.shape());
        return n.grad;
    }

    // -- ops ----------------------------------------------------------------

    Var dense(Var x, Var w, Var b) {
        Tensor<Real> y = dense_forward(value(x), value(w), value(b));
        return push(std::move(y), needs({x, w, b}), {x, w, b},
                    [x, w, b](Tape& t, const Tensor<Real>& gy) {
                        const auto& xv = t.value(x);
                        const auto& wv = t.value(w);
                        const std::size_t n = xv.dim(0), din = xv.dim(1), dout = wv.dim(1);
                        if (t.wants(x)) {
                            Tensor<Real> gx({n, din});
                            matmul_nt(gy.data(), wv.data(), gx.data(), n, dout, din);
                            t.accumulate(x, gx);
                        }
                        if (t.wants(w)) {
                            Tensor<Real> gw({din, dout});
                            matmul_tn(xv.data(), gy.data(), gw.data(), din, n, dout);
                            t.accumulate(w, gw);
                        }
                        if (t.wants(b)) {
                            Tensor<Real> gb(t.value(b).shape());
                            for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < dout; ++j) gb[j] += gy.at2(i, j);
                            t.accumulate(b, gb);
                        }
                    });
    }

    Var conv2d(Var x, Var k, std::size_t stride, Padding pad) {
        Tensor<Real> y = conv2d_forward(value(x), value(k), stride, pad);
        return push(std::move(y), needs({x, k}), {x, k},
                    [x, k, stride, pad](Tape& t, const Tensor<Real>& gy) {
                        const auto& xv = t.value(x);
                        const auto& kv = t.value(k);
                        if (t.wants(x))
                            t.accumulate(x, conv2d_input_grad(gy, kv, stride, pad, xv.dim(1), xv.dim(2)));
                        if (t.wants(k))
                            t.accumulate(k, conv2d_kernel_grad(xv, gy, kv.dim(0), kv.dim(1), stride, pad));
                    });
    }

    // kernel is conv-oriented [kh,kw,co,ci]; output is [n, h*stride, w*stride, co]
    Var conv_transpose2d(Var x, Var k, std::size_t stride) {
        Tensor<Real> y = conv_transpose2d_forward(value(x), value(k), stride);
        return push(std::move(y), needs({x, k}), {x, k},
                    [x, k, stride](Tape& t, const Tensor<Real>& gy) {
                        const auto& xv = t.value(x);
                        const auto& kv = t.value(k);
                        if (t.wants(x)) t.accumulate(x, conv2d_forward(gy, kv, stride, Padding::Same));
                        if (t.wants(k))
                            t.accumulate(k, conv2d_kernel_grad(gy, xv, kv.dim(0), kv.dim(1), stride,
                                                               Padding::Same));
                    });
    }

    Var channel_bias(Var x, Var b) {
        Tensor<Real> y = channel_bias_forward(value(x), value(b));
        return push(std::move(y), needs({x, b}), {x, b}, [x, b](Tape& t, const Tensor<Real>& gy) {
            if (t.wants(x)) t.accumulate(x, gy);
            if (t.wants(b)) {
                const std::size_t c = t.value(b).numel();
                Tensor<Real> gb(t.value(b).shape());
                const std::size_t rows = gy.numel() / c;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += gy[r * c + j];
                t.accumulate(b, gb);
            }
        });
    }

    Var batch_norm(Var x, Var gamma, Var beta, Tensor<Real>& running_mean, Tensor<Real>& running_var,
                   BnMode mode, Real momentum, Real eps, bool update_running) {
        const bool track = needs({x, gamma, beta});
        auto cache = std::make_shared<BnCache<Real>>();
        Tensor<Real> y = batch_norm_forward(value(x), value(gamma), value(beta), running_mean, running_var,
                                            mode, momentum, eps, mode == BnMode::Train && update_running,
                                            (track && mode == BnMode::Train) ? cache.get() : nullptr);
        if (mode == BnMode::Infer) {
            // affine map with constant statistics
            Tensor<Real> rm = running_mean, rv = running_var;
            return push(std::move(y), track, {x, gamma, beta},
                        [x, gamma, beta, rm, rv, eps](Tape& t, const Tensor<Real>& gy) {
                            const auto& gm = t.value(gamma);
                            const std::size_t c = gm.numel();
                            const std::size_t rows = gy.numel() / c;
                            if (t.wants(x)) {
                                Tensor<Real> gx(gy.shape());
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < c; ++j)
                                        gx[r * c + j] =
                                            gy[r * c + j] * gm[j] / std::sqrt(rv[j] + eps);
                                t.accumulate(x, gx);
                            }
                            if (t.wants(gamma) || t.wants(beta)) {
                                Tensor<Real> gg({c}), gb({c});
                                const auto& xv = t.value(x);
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < c; ++j) {
                                        const Real xhat =
                                            (xv[r * c + j] - rm[j]) / std::sqrt(rv[j] + eps);
                                        gg[j] += gy[r * c + j] * xhat;
                                        gb[j] += gy[r * c + j];
                                    }
                                if (t.wants(gamma)) t.accumulate(gamma, gg);
                                if (t.wants(beta)) t.accumulate(beta, gb);
                            }
                        });
        }
        return push(std::move(y), track, {x, gamma, beta},
                    [x, gamma, beta, cache](Tape& t, const Tensor<Real>& gy) {
                        Tensor<Real> gx, gg, gb;
                        batch_norm_backward(gy, t.value(gamma), *cache, gx, gg, gb);
                        if (t.wants(x)) t.accumulate(x, gx);
                        if (t.wants(gamma)) t.accumulate(gamma, gg);
                        if (t.wants(beta)) t.accumulate(beta, gb);
                    });
    }

    Var max_pool(Var x, std::size_t window, std::size_t stride) {
        auto argmax = std::make_shared<std::vector<std::size_t>>();
        Tensor<Real> y = max_pool_forward(value(x), window, stride, argmax.get());
        return push(std::move(y), needs({x}), {x}, [x, argmax](Tape& t, const Tensor<Real>& gy) {
            if (!t.wants(x)) return;
            Tensor<Real> gx(t.value(x).shape());
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[(*argmax)[i]] += gy[i];
            t.accumulate(x, gx);
        });
    }

    Var global_avg_pool(Var x) {
        Tensor<Real> y = global_avg_pool_forward(value(x));
        return push(std::move(y), needs({x}), {x}, [x](Tape& t, const Tensor<Real>& gy) {
            if (!t.wants(x)) return;
            const auto& xv = t.value(x);
            const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
            Tensor<Real> gx(xv.shape());
            const Real inv = Real(1) / Real(h * w);
            for (std::size_t ni = 0; ni < n; ++ni)
                for (std::size_t p = 0; p < h * w; ++p)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        gx[(ni * h * w + p) * c + ch] = gy[ni * c + ch] * inv;
            t.accumulate(x, gx);
        });
    }

    Var activation(Var x, Activation kind, Real slope = Real(0.2)) {
        Tensor<Real> y = activation_forward(value(x), kind, slope);
        Var out = push(std::move(y), needs({x}), {x}, nullptr);
        if (nodes_[out.id].requires_grad)
            nodes_[out.id].backward = [x, out, kind, slope](Tape& t, const Tensor<Real>& gy) {
                if (!t.wants(x)) return;
                t.accumulate(x, activation_backward(gy, t.value(x), t.value(out), kind, slope));
            };
        return out;
    }

    Var dropout(Var x, Real p, bool train, Rng& rng) {
        auto mask = std::make_shared<Tensor<Real>>();
        Tensor<Real> y = dropout_forward(value(x), p, train, rng, mask.get());
        return push(std::move(y), needs({x}), {x}, [x, mask](Tape& t, const Tensor<Real>& gy) {
            if (!t.wants(x)) return;
            Tensor<Real> gx(gy.shape());
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * (*mask)[i];
            t.accumulate(x, gx);
        });
    }

    // row gather: labels index into table [num_classes, dim]
    Var embed(std::vector<std::size_t> labels, Var table) {
        const auto& tab = value(table);
        if (tab.rank() != 2) throw ShapeError("embed: table must be 2-D, got " + shape_str(tab.shape()));
        const std::size_t n = labels.size(), dim = tab.dim(1);
        Tensor<Real> y({n, dim});
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] >= tab.dim(0))
                throw ValueError("embed: label " + std::to_string(labels[i]) + " out of range for table " +
                                 shape_str(tab.shape()));
            for (std::size_t j = 0; j < dim; ++j) y.at2(i, j) = tab.at2(labels[i], j);
        }
        return push(std::move(y), needs({table}), {table},
                    [table, labels = std::move(labels)](Tape& t, const Tensor<Real>& gy) {
                        if (!t.wants(table)) return;
                        Tensor<Real> gt(t.value(table).shape());
                        const std::size_t dim = gt.dim(1);
                        for (std::size_t i = 0; i < labels.size(); ++i)
                            for (std::size_t j = 0; j < dim; ++j) gt.at2(labels[i], j) += gy.at2(i, j);
                        t.accumulate(table, gt);
                    });
    }

    Var reshape(Var x, Shape s) {
        Tensor<Real> y = value(x).reshaped(std::move(s));
        return push(std::move(y), needs({x}), {x}, [x](Tape& t, const Tensor<Real>& gy) {
            if (t.wants(x)) t.accumulate(x, gy.reshaped(t.value(x).shape()));
        });
    }

    // concatenate along the trailing axis
    Var concat_last(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (av.rank() != bv.rank()) throw ShapeError("concat: rank mismatch");
        Shape s = av.shape();
        for (std::size_t i = 0; i + 1 < s.size(); ++i)
            if (s[i] != bv.dim(i))
                throw ShapeError("concat: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
        const std::size_t ca = av.dim(av.rank() - 1), cb = bv.dim(bv.rank() - 1);
        s.back() = ca + cb;
        Tensor<Real> y(s);
        const std::size_t rows = av.numel() / ca;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < ca; ++j) y[r * (ca + cb) + j] = av[r * ca + j];
            for (std::size_t j = 0; j < cb; ++j) y[r * (ca + cb) + ca + j] = bv[r * cb + j];
        }
        return push(std::move(y), needs({a, b}), {a, b}, [a, b, ca, cb](Tape& t, const Tensor<Real>& gy) {
            const std::size_t rows = gy.numel() / (ca + cb);
            if (t.wants(a)) {
                Tensor<Real> ga(t.value(a).shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] = gy[r * (ca + cb) + j];
                t.accumulate(a, ga);
            }
            if (t.wants(b)) {
                Tensor<Real> gb(t.value(b).shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < cb; ++j) gb[r * cb + j] = gy[r * (ca + cb) + ca + j];
                t.accumulate(b, gb);
            }
        });
    }

    Var add(Var a, Var b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("add: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
        Tensor<Real> y(av.shape());
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] + bv[i];
        return push(std::move(y), needs({a, b}), {a, b}, [a, b](Tape& t, const Tensor<Real>& gy) {
            if (t.wants(a)) t.accumulate(a, gy);
            if (t.wants(b)) t.accumulate(b, gy);
        });
    }

    Var scale(Var x, Real factor) {
        Tensor<Real> y(value(x).shape());
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = value(x)[i] * factor;
        return push(std::move(y), needs({x}), {x}, [x, factor](Tape& t, const Tensor<Real>& gy) {
            if (!t.wants(x)) return;
            Tensor<Real> gx(gy.shape());
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * factor;
            t.accumulate(x, gx);
        });
    }

    Var sum(Var x) {
        Real s = Real(0);
        for (std::size_t i = 0; i < value(x).numel(); ++i) s += value(x)[i];
        return push(Tensor<Real>({1}, {s}), needs({x}), {x}, [x](Tape& t, const Tensor<Real>& gy) {
            if (!t.wants(x)) return;
            Tensor<Real> gx(t.value(x).shape());
            gx.fill(gy[0]);
            t.accumulate(x, gx);
        });
    }

    // scalar dot with a constant weighting tensor
    Var weighted_sum(Var x, Tensor<Real> weights) {
        const auto& xv = value(x);
        if (!xv.same_shape(weights))
            throw ShapeError("weighted_sum: " + shape_str(xv.shape()) + " vs " +
                             shape_str(weights.shape()));
        Real s = Real(0);
        for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i] * weights[i];
        return push(Tensor<Real>({1}, {s}), needs({x}), {x},
                    [x, weights = std::move(weights)](Tape& t, const Tensor<Real>& gy) {
                        if (!t.wants(x)) return;
                        Tensor<Real> gx(weights.shape());
                        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = weights[i] * gy[0];
                        t.accumulate(x, gx);
                    });
    }

    Var loss(Loss kind, Var pred, Tensor<Real> target) {
        Tensor<Real> gpred;
        Real l;
        switch (kind) {
            case Loss::Bce:
                l = bce_loss(value(pred), target, needs({pred}) ? &gpred : nullptr);
                break;
            case Loss::CategoricalCe:
                l = categorical_ce_loss(value(pred), target, needs({pred}) ? &gpred : nullptr);
                break;
            default:
                throw ValueError("sparse loss takes index labels, not a target tensor");
        }
        return push(Tensor<Real>({1}, {l}), needs({pred}), {pred},
                    [pred, gpred = std::move(gpred)](Tape& t, const Tensor<Real>& gy) {
                        if (!t.wants(pred)) return;
                        Tensor<Real> g(gpred.shape());
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = gpred[i] * gy[0];
                        t.accumulate(pred, g);
                    });
    }

    Var sparse_ce(Var pred, const std::vector<std::size_t>& labels) {
        Tensor<Real> gpred;
        const Real l = sparse_ce_loss(value(pred), labels, needs({pred}) ? &gpred : nullptr);
        return push(Tensor<Real>({1}, {l}), needs({pred}), {pred},
                    [pred, gpred = std::move(gpred)](Tape& t, const Tensor<Real>& gy) {
                        if (!t.wants(pred)) return;
                        Tensor<Real> g(gpred.shape());
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = gpred[i] * gy[0];
                        t.accumulate(pred, g);
                    });
    }

    // -- reverse sweep -------------------------------------------------------

    void backward(Var loss_node) {
        Node& root = nodes_[loss_node.id];
        if (root.value.numel() != 1)
            throw ValueError("backward requires a scalar loss, got " + shape_str(root.value.shape()));
        root.grad = Tensor<Real>({1}, {Real(1)});
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.numel() == 0) continue;
            n.backward(*this, n.grad);
        }
    }

    std::size_t size() const { return nodes_.size(); }

    bool wants(Var v) const { return nodes_[v.id].requires_grad; }

    void accumulate(Var v, const Tensor<Real>& g) {
        Node& n = nodes_[v.id];
        if (!n.requires_grad) return;
        if (!n.value.same_shape(g))
            throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                             shape_str(n.value.shape()));
        if (n.grad.numel() == 0) {
            n.grad = g;
        } else {
            for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
        }
    }

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        std::function<void(Tape&, const Tensor<Real>&)> backward;
    };

    bool needs(std::initializer_list<Var> vars) const {
        if (!recording_) return false;
        for (Var v : vars)
            if (nodes_[v.id].requires_grad) return true;
        return false;
    }

    template <typename Fn>
    Var push(Tensor<Real> value, bool requires_grad, std::initializer_list<Var> inputs, Fn&& backward) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        for (Var v : inputs) n.inputs.push_back(v.id);
        if constexpr (!std::is_same_v<std::decay_t<Fn>, std::nullptr_t>) {
            if (requires_grad) n.backward = std::forward<Fn>(backward);
        }
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    bool recording_;
    std::vector<Node> nodes_;
};

}  // namespace synthaug
