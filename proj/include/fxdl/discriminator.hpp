#pragma once

#include "fxdl/graph.hpp"
#include "fxdl/param_set.hpp"
#include "fxdl/rng.hpp"

namespace fxdl {

// Sample-space realism critic: a frozen randomly initialized two-level dense
// stack provides features, and small trainable linear heads score each level.
// The decision is sigmoid(sum of level scores). Frozen weights live outside
// the ParamSet, so no optimizer can ever touch them.
template <typename T>
class Discriminator {
public:
    Discriminator(std::size_t data_dim, std::size_t hidden, Rng rng)
        : data_dim_(data_dim), hidden_(hidden) {
        require(data_dim >= 1 && hidden >= 2, "Discriminator: degenerate sizes");
        f1_w_ = noise({data_dim, hidden}, rng, data_dim);
        f1_b_ = noise({hidden}, rng, hidden);
        f2_w_ = noise({hidden, hidden}, rng, hidden);
        f2_b_ = noise({hidden}, rng, hidden);
        head1_w_ = params_.add("head1.w", Tensor<T>({hidden, 1}));
        head1_b_ = params_.add("head1.b", Tensor<T>({1}));
        head2_w_ = params_.add("head2.w", Tensor<T>({hidden, 1}));
        head2_b_ = params_.add("head2.b", Tensor<T>({1}));
        // zero-initialized heads: the fresh critic outputs exactly 0.5
    }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const Tensor<T>& frozen_level1() const { return f1_w_; }
    const Tensor<T>& frozen_level2() const { return f2_w_; }

    // Pre-sigmoid realism score, [n,1].
    Var logits(Graph<T>& g, Var x) const {
        require(g.val(x).cols() == data_dim_, "Discriminator: data dim mismatch");
        Var h1 = g.gelu(g.affine(x, g.constant(f1_w_), g.constant(f1_b_)));
        Var h2 = g.gelu(g.affine(h1, g.constant(f2_w_), g.constant(f2_b_)));
        Var z1 = g.affine(h1, g.param(&params_[head1_w_]), g.param(&params_[head1_b_]));
        Var z2 = g.affine(h2, g.param(&params_[head2_w_]), g.param(&params_[head2_b_]));
        return g.add(z1, z2);
    }

    // D(x) in (0,1), value-only.
    Tensor<T> prob(const Tensor<T>& x) const {
        Graph<T> g(false);
        return g.val(g.sigmoid(logits(g, g.constant(x))));
    }

    void assign(const ParamSet<T>& src) {
        require(params_.same_structure(src), "Discriminator::assign: structure mismatch");
        for (std::size_t i = 0; i < src.size(); ++i) params_[i] = src[i];
    }

private:
    Tensor<T> noise(std::vector<std::size_t> shape, Rng& rng, std::size_t fan) {
        Tensor<T> t(std::move(shape));
        T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan)));
        for (auto& x : t.v) x = s * static_cast<T>(rng.normal());
        return t;
    }

    std::size_t data_dim_, hidden_;
    Tensor<T> f1_w_, f1_b_, f2_w_, f2_b_;  // frozen
    ParamSet<T> params_;
    std::size_t head1_w_ = 0, head1_b_ = 0, head2_w_ = 0, head2_b_ = 0;
};

}  // namespace fxdl
