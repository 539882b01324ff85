#pragma once

#include <cmath>
#include <vector>

#include "fxdl/denoiser.hpp"
#include "fxdl/schedule.hpp"
#include "fxdl/toyworld.hpp"

namespace fxdl {

// Per-block reuse error between two adjacent schedule steps: how much each
// block's contribution to the residual stream moves from one step to the
// next, measured along real sampling trajectories.
template <typename T>
struct ReuseProfile {
    std::vector<T> e;       // one entry per block, mean |delta_{n,t+1} - delta_{n,t}| per element
    std::size_t step_lo;    // schedule indices profiled
    std::size_t step_hi;
    std::size_t batch;
};

// Runs the sampler on `batch` fresh noise draws (conditions cycled) and
// compares per-block contributions between schedule steps `step` and
// `step+1`. Contributions come from full-mode stream traces, so the profile
// never perturbs the trajectory it measures.
template <typename T>
ReuseProfile<T> profile_reuse_error(const BlockStackModel<T>& model, const Schedule<T>& sched,
                                    const MixtureSpec<T>& world, std::size_t batch,
                                    std::uint64_t seed, std::size_t step = 0) {
    sched.validate();
    require(sched.steps() >= 2, "profile_reuse_error: schedule needs at least two steps");
    require(step + 1 < sched.steps(), "profile_reuse_error: step pair out of range");
    require(batch >= 1, "profile_reuse_error: empty batch");
    const std::size_t B = model.config().blocks;

    ReuseProfile<T> prof{std::vector<T>(B, T(0)), step, step + 1, batch};
    double denom = 0;
    for (std::size_t c = 0; c < world.classes; ++c) {
        std::size_t n = batch / world.classes + (c < batch % world.classes ? 1 : 0);
        if (n == 0) continue;
        Rng rng = Rng::derive(seed, "cache/profile/noise", c);
        Tensor<T> x = rng.randn<T>({n, model.config().data_dim});
        std::vector<std::vector<Tensor<T>>> traces(2);
        EulerOptions<T> opt;
        opt.condition = static_cast<int>(c);
        opt.step_tap = [&](std::size_t idx, T t, const Tensor<T>& state) {
            if (idx != step && idx != step + 1) return;
            Graph<T> g(false);
            std::vector<Tensor<T>> trace;
            model.forward(g, g.constant(state), t, static_cast<int>(c), {}, {}, &trace);
            traces[idx - step] = std::move(trace);
        };
        euler_sample(model.velocity_fn(), sched, x, opt);
        require(traces[0].size() == B + 1 && traces[1].size() == B + 1,
                "profile_reuse_error: trace capture failed");
        for (std::size_t k = 0; k < B; ++k) {
            const Tensor<T>&lo_in = traces[0][k], &lo_out = traces[0][k + 1];
            const Tensor<T>&hi_in = traces[1][k], &hi_out = traces[1][k + 1];
            double acc = 0;
            for (std::size_t j = 0; j < lo_in.numel(); ++j) {
                double d_lo = static_cast<double>(lo_out.v[j]) - static_cast<double>(lo_in.v[j]);
                double d_hi = static_cast<double>(hi_out.v[j]) - static_cast<double>(hi_in.v[j]);
                acc += std::abs(d_hi - d_lo);
            }
            prof.e[k] += static_cast<T>(acc);
        }
        denom += static_cast<double>(n * model.config().hidden_dim);
    }
    for (auto& e : prof.e) e = static_cast<T>(static_cast<double>(e) / denom);
    return prof;
}

// Contiguous window of length k minimizing the summed reuse error, with the
// start constrained to at least min_start; ties break toward earlier blocks.
template <typename T>
SegmentSpec select_segment(const ReuseProfile<T>& profile, std::size_t k,
                           std::size_t min_start) {
    const std::size_t B = profile.e.size();
    require(k >= 1, "select_segment: k must be positive");
    require(min_start + k <= B, "select_segment: window does not fit after min_start");
    std::size_t best = min_start;
    double best_sum = 0;
    for (std::size_t j = 0; j < k; ++j) best_sum += static_cast<double>(profile.e[min_start + j]);
    for (std::size_t n = min_start + 1; n + k <= B; ++n) {
        double s = 0;
        for (std::size_t j = 0; j < k; ++j) s += static_cast<double>(profile.e[n + j]);
        if (s < best_sum) {
            best_sum = s;
            best = n;
        }
    }
    return SegmentSpec{best, best + k - 1};
}

// Computed-block fraction across the whole sampling run. Reported exactly
// and rounded to two decimals for tables.
struct EffectiveNfe {
    double exact = 0;
    double rounded = 0;
};

inline EffectiveNfe effective_nfe(std::size_t total_blocks,
                                  const std::vector<std::size_t>& computed_per_step) {
    require(total_blocks >= 1, "effective_nfe: empty model");
    require(!computed_per_step.empty(), "effective_nfe: no steps");
    std::size_t sum = 0;
    for (std::size_t c : computed_per_step) {
        require(c <= total_blocks, "effective_nfe: computed blocks exceed total");
        sum += c;
    }
    EffectiveNfe r;
    r.exact = static_cast<double>(sum) / static_cast<double>(total_blocks);
    r.rounded = std::round(r.exact * 100.0) / 100.0;
    return r;
}

}  // namespace fxdl
