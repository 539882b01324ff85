#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "fxdl/rng.hpp"
#include "fxdl/schedule.hpp"
#include "fxdl/tensor.hpp"

namespace fxdl {

// Forward corruption along the straight path x_t = (1-t) x0 + t e, with the
// network predicting the constant velocity v = e - x0 of that path. Algebra:
//   x0 = x_t - t v,   v = (x_t - x0)/t,   score = -(x_t - (1-t) x0)/t^2.

template <typename T>
Tensor<T> add_noise(const Tensor<T>& x0, const Tensor<T>& eps, T t) {
    require(x0.same_shape(eps), "add_noise: shape mismatch");
    require(t >= T(0) && t <= T(1), "add_noise: t outside [0,1]");
    Tensor<T> out = x0;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.v[i] = (T(1) - t) * x0.v[i] + t * eps.v[i];
    return out;
}

template <typename T>
Tensor<T> velocity_to_x0(const Tensor<T>& x_t, const Tensor<T>& v, T t) {
    require(x_t.same_shape(v), "velocity_to_x0: shape mismatch");
    Tensor<T> out = x_t;
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = x_t.v[i] - t * v.v[i];
    return out;
}

template <typename T>
Tensor<T> x0_to_velocity(const Tensor<T>& x_t, const Tensor<T>& x0, T t) {
    require(x_t.same_shape(x0), "x0_to_velocity: shape mismatch");
    require(t > T(0), "x0_to_velocity: t must be positive");
    Tensor<T> out = x_t;
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = (x_t.v[i] - x0.v[i]) / t;
    return out;
}

// Score implied by a clean-sample prediction at (x_t, t). For the exact
// posterior mean this equals the marginal score; t must be positive.
template <typename T>
Tensor<T> x0_to_score(const Tensor<T>& x_t, const Tensor<T>& x0, T t) {
    require(x_t.same_shape(x0), "x0_to_score: shape mismatch");
    require(t > T(0), "x0_to_score: t must be positive");
    Tensor<T> out = x_t;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.v[i] = -(x_t.v[i] - (T(1) - t) * x0.v[i]) / (t * t);
    return out;
}

// Classifier-free guidance applied to any linear prediction space:
//   pred = uncond + w (cond - uncond).  w=1 returns cond exactly.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& cond, const Tensor<T>& uncond, T w) {
    require(cond.same_shape(uncond), "cfg_combine: shape mismatch");
    if (w == T(1)) return cond;  // exact passthrough, no fp residue
    Tensor<T> out = cond;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.v[i] = uncond.v[i] + w * (cond.v[i] - uncond.v[i]);
    return out;
}

// Timestep-gated guidance: full strength only at or below the gate.
template <typename T>
struct GuidanceConfig {
    T w = T(7);
    T alpha = T(0.94);

    void validate() const {
        require(w >= T(1), "GuidanceConfig: w must be >= 1");
        require(alpha > T(0) && alpha <= T(1), "GuidanceConfig: alpha must lie in (0,1]");
    }
};

// Guided teacher prediction with the unconditional branch supplied lazily:
// above the gate the conditional prediction passes through bitwise and the
// unconditional branch is never evaluated.
template <typename T>
Tensor<T> guided_real_prediction(T t, const GuidanceConfig<T>& cfg, const Tensor<T>& pred_cond,
                                 const std::function<Tensor<T>()>& pred_uncond) {
    cfg.validate();
    if (t > cfg.alpha) return pred_cond;
    return cfg_combine(pred_cond, pred_uncond(), cfg.w);
}

// ---- Euler sampling ----

template <typename T>
struct EulerResult {
    Tensor<T> x0;                        // final clean prediction
    std::vector<Tensor<T>> trajectory;   // states at every schedule entry, then x0
};

// Velocity callables take (x, t, condition); empty condition means the
// unconditional branch.
template <typename T>
using VelocityFn =
    std::function<Tensor<T>(const Tensor<T>&, T, const std::optional<int>&)>;

template <typename T>
struct EulerOptions {
    std::optional<int> condition;
    std::optional<GuidanceConfig<T>> guidance;
    // Called with (step index, t, state) before each model evaluation.
    std::function<void(std::size_t, T, const Tensor<T>&)> step_tap;
};

// Walk the schedule with Euler steps x' = x + (t' - t) v and finish with the
// exact jump to t=0 (x0 = x - t v). A single-entry schedule is therefore one
// generator prediction.
template <typename T, typename Vel>
EulerResult<T> euler_sample(Vel&& velocity, const Schedule<T>& sched, Tensor<T> x,
                            const EulerOptions<T>& opt = {}) {
    sched.validate();
    if (opt.guidance) opt.guidance->validate();
    EulerResult<T> res;
    res.trajectory.push_back(x);
    for (std::size_t i = 0; i < sched.steps(); ++i) {
        T t = sched.t[i];
        if (opt.step_tap) opt.step_tap(i, t, x);
        Tensor<T> v = opt.guidance && opt.condition
                          ? guided_real_prediction<T>(
                                t, *opt.guidance, velocity(x, t, opt.condition),
                                [&] { return velocity(x, t, std::optional<int>{}); })
                          : velocity(x, t, opt.condition);
        T t_next = (i + 1 < sched.steps()) ? sched.t[i + 1] : T(0);
        for (std::size_t j = 0; j < x.numel(); ++j) x.v[j] += (t_next - t) * v.v[j];
        res.trajectory.push_back(x);
    }
    res.x0 = std::move(x);
    return res;
}

}  // namespace fxdl
