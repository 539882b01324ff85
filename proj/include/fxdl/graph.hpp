#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "fxdl/tensor.hpp"

namespace fxdl {

struct Var {
    std::uint32_t id = 0;
};

// Reverse-mode tape over a fixed, closed primitive set. Nodes are created in
// topological order, so backward is a single reverse sweep. One graph lives
// for one forward/backward cycle; parameters are bound by pointer so their
// gradients can be read back after backward().
//
// With recording disabled the same ops run value-only (no closures), which is
// the cheap path for inference and finite-difference probes.
template <typename T>
class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) { nodes_.reserve(256); }

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }

    // ---- leaves ----

    Var constant(Tensor<T> v) { return push(std::move(v), false); }

    // Differentiable leaf bound to external storage; repeated binds of the
    // same pointer return the same node.
    Var param(const Tensor<T>* p) {
        auto it = param_nodes_.find(p);
        if (it != param_nodes_.end()) return Var{it->second};
        Var n = push(*p, true);
        param_nodes_.emplace(p, n.id);
        return n;
    }

    // ---- elementwise / structural ops ----

    Var add(Var a, Var b) {
        const Tensor<T>&ta = val(a), &tb = val(b);
        if (ta.same_shape(tb)) {
            Tensor<T> out = ta;
            for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += tb.v[i];
            return make(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
                const Tensor<T>& gr = g.node_grad(self);
                g.accum_same(a, gr);
                g.accum_same(b, gr);
            });
        }
        // row broadcast: [n,m] + [m]
        require(tb.rank() == 1 && ta.cols() == tb.numel(),
                "add: shapes " + ta.shape_str() + " and " + tb.shape_str());
        Tensor<T> out = ta;
        std::size_t m = tb.numel();
        for (std::size_t r = 0; r < ta.rows(); ++r)
            for (std::size_t j = 0; j < m; ++j) out.v[r * m + j] += tb.v[j];
        return make(std::move(out), {a, b}, [a, b, m](Graph& g, Var self) {
            const Tensor<T>& gr = g.node_grad(self);
            g.accum_same(a, gr);
            if (g.needs(b)) {
                Tensor<T>& gb = g.grad_buf(b);
                for (std::size_t r = 0; r < gr.rows(); ++r)
                    for (std::size_t j = 0; j < m; ++j) gb.v[j] += gr.v[r * m + j];
            }
        });
    }

    Var sub(Var a, Var b) {
        const Tensor<T>&ta = val(a), &tb = val(b);
        require(ta.same_shape(tb), "sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= tb.v[i];
        return make(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
            const Tensor<T>& gr = g.node_grad(self);
            g.accum_same(a, gr);
            if (g.needs(b)) {
                Tensor<T>& gb = g.grad_buf(b);
                for (std::size_t i = 0; i < gr.numel(); ++i) gb.v[i] -= gr.v[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>&ta = val(a), &tb = val(b);
        if (ta.same_shape(tb)) {
            Tensor<T> out = ta;
            for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] *= tb.v[i];
            return make(std::move(out), {a, b}, [a, b](Graph& g, Var self) {
                const Tensor<T>& gr = g.node_grad(self);
                const Tensor<T>&va = g.val(a), &vb = g.val(b);
                if (g.needs(a)) {
                    Tensor<T>& ga = g.grad_buf(a);
                    for (std::size_t i = 0; i < gr.numel(); ++i) ga.v[i] += gr.v[i] * vb.v[i];
                }
                if (g.needs(b)) {
                    Tensor<T>& gb = g.grad_buf(b);
                    for (std::size_t i = 0; i < gr.numel(); ++i) gb.v[i] += gr.v[i] * va.v[i];
                }
            });
        }
        // row broadcast: [n,m] * [m]
        require(tb.rank() == 1 && ta.cols() == tb.numel(),
                "mul: shapes " + ta.shape_str() + " and " + tb.shape_str());
        Tensor<T> out = ta;
        std::size_t m = tb.numel();
        for (std::size_t r = 0; r < ta.rows(); ++r)
            for (std::size_t j = 0; j < m; ++j) out.v[r * m + j] *= tb.v[j];
        return make(std::move(out), {a, b}, [a, b, m](Graph& g, Var self) {
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>&va = g.val(a), &vb = g.val(b);
            if (g.needs(a)) {
                Tensor<T>& ga = g.grad_buf(a);
                for (std::size_t r = 0; r < gr.rows(); ++r)
                    for (std::size_t j = 0; j < m; ++j)
                        ga.v[r * m + j] += gr.v[r * m + j] * vb.v[j];
            }
            if (g.needs(b)) {
                Tensor<T>& gb = g.grad_buf(b);
                for (std::size_t r = 0; r < gr.rows(); ++r)
                    for (std::size_t j = 0; j < m; ++j)
                        gb.v[j] += gr.v[r * m + j] * va.v[r * m + j];
            }
        });
    }

    Var scale(Var a, T c) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x *= c;
        return make(std::move(out), {a}, [a, c](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i) ga.v[i] += c * gr.v[i];
        });
    }

    // [n,k] x [k,m] -> [n,m]
    Var matmul(Var a, Var b) {
        const Tensor<T>&ta = val(a), &tb = val(b);
        require(ta.rank() == 2 && tb.rank() == 2 && ta.shape[1] == tb.shape[0],
                "matmul: shapes " + ta.shape_str() + " x " + tb.shape_str());
        std::size_t n = ta.shape[0], k = ta.shape[1], m = tb.shape[1];
        Tensor<T> out({n, m});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                T aip = ta.v[i * k + p];
                const T* brow = &tb.v[p * m];
                T* orow = &out.v[i * m];
                for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
            }
        return make(std::move(out), {a, b}, [a, b, n, k, m](Graph& g, Var self) {
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>&va = g.val(a), &vb = g.val(b);
            if (g.needs(a)) {  // ga += gr . b^T
                Tensor<T>& ga = g.grad_buf(a);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        T gij = gr.v[i * m + j];
                        for (std::size_t p = 0; p < k; ++p)
                            ga.v[i * k + p] += gij * vb.v[p * m + j];
                    }
            }
            if (g.needs(b)) {  // gb += a^T . gr
                Tensor<T>& gb = g.grad_buf(b);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        T aip = va.v[i * k + p];
                        const T* grow = &gr.v[i * m];
                        T* gbrow = &gb.v[p * m];
                        for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                    }
            }
        });
    }

    // x[n,k] . w[k,m] + b[m]
    Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

    // Normalization over the last dimension, no learnable terms.
    Var layer_norm(Var x, T eps = T(1e-5)) {
        const Tensor<T>& tx = val(x);
        std::size_t m = tx.cols(), rows = tx.rows();
        require(m > 0, "layer_norm: empty tensor");
        Tensor<T> out = tx;
        std::vector<T> rstd(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            T* p = &out.v[r * m];
            T mean = 0;
            for (std::size_t j = 0; j < m; ++j) mean += p[j];
            mean /= static_cast<T>(m);
            T var = 0;
            for (std::size_t j = 0; j < m; ++j) {
                p[j] -= mean;
                var += p[j] * p[j];
            }
            var /= static_cast<T>(m);
            T rs = T(1) / std::sqrt(var + eps);
            rstd[r] = rs;
            for (std::size_t j = 0; j < m; ++j) p[j] *= rs;
        }
        return make(std::move(out), {x}, [x, m, rows, rstd](Graph& g, Var self) {
            if (!g.needs(x)) return;
            // dx = rstd * (gr - mean(gr) - y * mean(gr*y)) per row
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& y = g.val(self);
            Tensor<T>& gx = g.grad_buf(x);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* yp = &y.v[r * m];
                const T* gp = &gr.v[r * m];
                T mg = 0, mgy = 0;
                for (std::size_t j = 0; j < m; ++j) {
                    mg += gp[j];
                    mgy += gp[j] * yp[j];
                }
                mg /= static_cast<T>(m);
                mgy /= static_cast<T>(m);
                for (std::size_t j = 0; j < m; ++j)
                    gx.v[r * m + j] += rstd[r] * (gp[j] - mg - yp[j] * mgy);
            }
        });
    }

    // Smooth nonlinearity (tanh-form gelu).
    Var gelu(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = gelu_fwd(x);
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& va = g.val(a);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] * gelu_bwd(va.v[i]);
        });
    }

    Var tanh_(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = std::tanh(x);
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& y = g.val(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] * (T(1) - y.v[i] * y.v[i]);
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = sigmoid_fwd(x);
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& y = g.val(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] * y.v[i] * (T(1) - y.v[i]);
        });
    }

    // log(1 + e^x), computed stably; derivative is sigmoid(x).
    Var softplus(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v)
            x = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& va = g.val(a);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] * sigmoid_fwd(va.v[i]);
        });
    }

    Var log_(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = std::log(x);
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& va = g.val(a);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] / va.v[i];
        });
    }

    Var square(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = x * x;
        return make(std::move(out), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            const Tensor<T>& va = g.val(a);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t i = 0; i < gr.numel(); ++i)
                ga.v[i] += gr.v[i] * T(2) * va.v[i];
        });
    }

    // Row extraction from a [r,c] matrix -> [c].
    Var take_row(Var a, std::size_t row) {
        const Tensor<T>& ta = val(a);
        require(ta.rank() == 2 && row < ta.shape[0], "take_row: bad row");
        std::size_t c = ta.shape[1];
        Tensor<T> out({c});
        for (std::size_t j = 0; j < c; ++j) out.v[j] = ta.v[row * c + j];
        return make(std::move(out), {a}, [a, row, c](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (std::size_t j = 0; j < c; ++j) ga.v[row * c + j] += gr.v[j];
        });
    }

    // ---- reductions ----

    Var sum(Var a) {
        const Tensor<T>& ta = val(a);
        T s = 0;
        for (T x : ta.v) s += x;
        return make(Tensor<T>::scalar(s), {a}, [a](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (auto& x : ga.v) x += gr.v[0];
        });
    }

    Var mean(Var a) {
        const Tensor<T>& ta = val(a);
        T s = 0;
        for (T x : ta.v) s += x;
        T n = static_cast<T>(ta.numel());
        return make(Tensor<T>::scalar(s / n), {a}, [a, n](Graph& g, Var self) {
            if (!g.needs(a)) return;
            const Tensor<T>& gr = g.node_grad(self);
            Tensor<T>& ga = g.grad_buf(a);
            for (auto& x : ga.v) x += gr.v[0] / n;
        });
    }

    // Forward identity that blocks gradient flow.
    Var stop_gradient(Var a) { return push(val(a), false); }

    // mean((a-b)^2), the workhorse regression loss.
    Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

    // ---- evaluation ----

    const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }

    // Gradient of the last backward() w.r.t. a bound parameter; zeros if the
    // parameter never influenced the loss.
    Tensor<T> grad(const Tensor<T>* p) const {
        auto it = param_nodes_.find(p);
        if (it == param_nodes_.end()) return Tensor<T>(p->shape);
        const Node& n = nodes_[it->second];
        if (n.grad.numel() == 0) return Tensor<T>(p->shape);
        return n.grad;
    }

    void backward(Var loss) {
        require(recording_, "backward: graph built with recording disabled");
        const Tensor<T>& lv = val(loss);
        require(lv.numel() == 1, "backward: loss must be scalar, got " + lv.shape_str());
        if (!lv.all_finite())
            throw NumericFailure("backward: loss is not finite");
        grad_buf(loss).v[0] = T(1);
        for (std::uint32_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.numel() == 0 || !n.back) continue;
            n.back(*this, Var{i});
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated lazily
        bool needs_grad = false;
        std::function<void(Graph&, Var)> back;
    };

    static T gelu_fwd(T x) {
        T u = T(0.7978845608028654) * (x + T(0.044715) * x * x * x);
        return T(0.5) * x * (T(1) + std::tanh(u));
    }
    static T gelu_bwd(T x) {
        T u = T(0.7978845608028654) * (x + T(0.044715) * x * x * x);
        T th = std::tanh(u);
        T sech2 = T(1) - th * th;
        T du = T(0.7978845608028654) * (T(1) + T(3) * T(0.044715) * x * x);
        return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * du;
    }
    static T sigmoid_fwd(T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
    }

    Var push(Tensor<T> v, bool needs) {
        nodes_.push_back(Node{std::move(v), Tensor<T>(), needs && recording_, {}});
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    template <typename F>
    Var make(Tensor<T> out, std::initializer_list<Var> parents, F&& back) {
        bool needs = false;
        if (recording_)
            for (Var p : parents) needs = needs || nodes_[p.id].needs_grad;
        Var v = push(std::move(out), needs);
        if (needs) nodes_[v.id].back = std::forward<F>(back);
        return v;
    }

    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    const Tensor<T>& node_grad(Var v) const { return nodes_[v.id].grad; }

    Tensor<T>& grad_buf(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape);
        return n.grad;
    }

    void accum_same(Var v, const Tensor<T>& gr) {
        if (!needs(v)) return;
        Tensor<T>& g = grad_buf(v);
        for (std::size_t i = 0; i < gr.numel(); ++i) g.v[i] += gr.v[i];
    }

    bool recording_;
    std::vector<Node> nodes_;
    std::unordered_map<const Tensor<T>*, std::uint32_t> param_nodes_;
};

}  // namespace fxdl
