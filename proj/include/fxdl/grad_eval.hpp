#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fxdl/graph.hpp"
#include "fxdl/param_set.hpp"

namespace fxdl {

// A loss builder constructs a scalar loss on the given graph. Parameters
// reach the graph through Graph::param inside the builder (models bind their
// own ParamSet entries).
template <typename T>
using LossBuilder = std::function<Var(Graph<T>&)>;

// Evaluate the loss and the gradient of every parameter in `params`.
// Parameters never touched by the builder get zero gradients.
template <typename T>
struct GradResult {
    T loss;
    ParamSet<T> grads;
};

template <typename T>
GradResult<T> grad_eval(const ParamSet<T>& params, const LossBuilder<T>& build) {
    Graph<T> g(true);
    Var loss = build(g);
    const Tensor<T>& lv = g.val(loss);
    require(lv.numel() == 1, "grad_eval: loss must be scalar, got " + lv.shape_str());
    if (!lv.all_finite()) throw NumericFailure("grad_eval: non-finite loss in forward pass");
    g.backward(loss);
    GradResult<T> r{lv.v[0], {}};
    for (std::size_t i = 0; i < params.size(); ++i)
        r.grads.add(params.name(i), g.grad(&params[i]));
    return r;
}

template <typename T>
T eval_loss(const LossBuilder<T>& build) {
    Graph<T> g(false);
    Var loss = build(g);
    const Tensor<T>& lv = g.val(loss);
    require(lv.numel() == 1, "eval_loss: loss must be scalar");
    return lv.v[0];
}

// Central finite-difference check of reverse-mode gradients.
struct CheckEntry {
    std::string name;
    double max_rel_err;
};

struct CheckReport {
    std::vector<CheckEntry> per_param;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Relative error uses max(|analytic|, |fd|) as denominator with an absolute
// floor so that matching near-zero gradients compare cleanly.
template <typename T>
CheckReport finite_diff_check(ParamSet<T>& params, const LossBuilder<T>& build,
                              T h, double tol) {
    require(h > T(0), "finite_diff_check: h must be positive");
    GradResult<T> ad = grad_eval(params, build);
    CheckReport rep;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = params[i];
        double worst = 0.0;
        for (std::size_t j = 0; j < p.numel(); ++j) {
            T saved = p.v[j];
            p.v[j] = saved + h;
            double lp = static_cast<double>(eval_loss<T>(build));
            p.v[j] = saved - h;
            double lm = static_cast<double>(eval_loss<T>(build));
            p.v[j] = saved;
            double fd = (lp - lm) / (2.0 * static_cast<double>(h));
            double an = static_cast<double>(ad.grads[i].v[j]);
            double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
            worst = std::max(worst, std::abs(an - fd) / denom);
        }
        rep.per_param.push_back({params.name(i), worst});
        rep.max_rel_err = std::max(rep.max_rel_err, worst);
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace fxdl
