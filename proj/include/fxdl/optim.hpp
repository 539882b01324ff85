#pragma once

#include <cmath>

#include "fxdl/param_set.hpp"

namespace fxdl {

// AdamW with decoupled weight decay: the decay multiplies parameters before
// the adaptive update, so decay never enters the moment estimates.
template <typename T>
struct OptState {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(1e-4);
    std::uint64_t step = 0;
    ParamSet<T> m;
    ParamSet<T> v;

    static OptState init(const ParamSet<T>& params, T lr, T beta1, T beta2,
                         T weight_decay, T eps = T(1e-8)) {
        OptState s;
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        s.weight_decay = weight_decay;
        s.m = ParamSet<T>::zeros_like(params);
        s.v = ParamSet<T>::zeros_like(params);
        return s;
    }
};

template <typename T>
void adamw_step(ParamSet<T>& params, const ParamSet<T>& grads, OptState<T>& st) {
    require(params.same_structure(grads), "adamw_step: param/grad structure mismatch");
    require(params.same_structure(st.m), "adamw_step: state built for a different ParamSet");
    st.step += 1;
    T bc1 = T(1) - std::pow(st.beta1, static_cast<T>(st.step));
    T bc2 = T(1) - std::pow(st.beta2, static_cast<T>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = params[i];
        const Tensor<T>& g = grads[i];
        Tensor<T>& m = st.m[i];
        Tensor<T>& v = st.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            p.v[j] *= (T(1) - st.lr * st.weight_decay);
            m.v[j] = st.beta1 * m.v[j] + (T(1) - st.beta1) * g.v[j];
            v.v[j] = st.beta2 * v.v[j] + (T(1) - st.beta2) * g.v[j] * g.v[j];
            T mhat = m.v[j] / bc1;
            T vhat = v.v[j] / bc2;
            p.v[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace fxdl
