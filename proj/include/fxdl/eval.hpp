#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fxdl/diffusion.hpp"
#include "fxdl/metrics.hpp"

namespace fxdl {

template <typename T>
Tensor<T> vstack(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), "vstack: nothing to stack");
    std::size_t cols = parts[0].cols(), rows = 0;
    for (const auto& p : parts) {
        require(p.cols() == cols, "vstack: column mismatch");
        rows += p.rows();
    }
    Tensor<T> out({rows, cols});
    std::size_t r = 0;
    for (const auto& p : parts) {
        std::copy(p.v.begin(), p.v.end(), out.v.begin() + r * cols);
        r += p.rows();
    }
    return out;
}

// Aggregate quality metrics for per-condition sample sets against matching
// teacher reference sets. Coverage pools hit modes across conditions over
// the whole mode inventory; diversity follows the four-samples-per-prompt
// protocol using consecutive quadruples; the kernel two-sample statistic is
// computed on the pooled sets with the median-distance bandwidth of the
// references.
template <typename T>
EvalReport evaluate_samples(const std::vector<Tensor<T>>& per_class_samples,
                            const std::vector<Tensor<T>>& per_class_refs,
                            const MixtureSpec<T>& world, T radius = T(-1)) {
    world.validate();
    require(per_class_samples.size() == world.classes,
            "evaluate_samples: one sample set per class required");
    require(per_class_refs.size() == world.classes,
            "evaluate_samples: one reference set per class required");
    if (radius <= T(0)) radius = T(3) * world.sigma;

    EvalReport rep;
    std::set<int> covered;
    std::size_t total = 0;
    double hq_acc = 0, cond_acc = 0;
    std::vector<Tensor<T>> groups;
    for (std::size_t c = 0; c < world.classes; ++c) {
        const Tensor<T>& xs = per_class_samples[c];
        require(xs.rows() >= 4, "evaluate_samples: need at least four samples per class");
        auto cov = mode_coverage(xs, world, static_cast<int>(c), radius);
        covered.insert(cov.covered.begin(), cov.covered.end());
        hq_acc += cov.hq_fraction * static_cast<double>(xs.rows());
        cond_acc += condition_accuracy(xs, static_cast<int>(c), world) *
                    static_cast<double>(xs.rows());
        total += xs.rows();
        for (std::size_t r = 0; r + 4 <= xs.rows(); r += 4) {
            Tensor<T> g({4, xs.cols()});
            std::copy(xs.v.begin() + r * xs.cols(), xs.v.begin() + (r + 4) * xs.cols(),
                      g.v.begin());
            groups.push_back(std::move(g));
        }
    }
    rep.mode_coverage =
        static_cast<double>(covered.size()) / static_cast<double>(world.modes());
    rep.hq_fraction = hq_acc / static_cast<double>(total);
    rep.condition_accuracy = cond_acc / static_cast<double>(total);
    rep.diversity = pairwise_diversity(groups);
    Tensor<T> pooled_refs = vstack(per_class_refs);
    rep.mmd2 = mmd2(vstack(per_class_samples), pooled_refs,
                    median_pairwise_distance(pooled_refs));
    require(std::isfinite(rep.mmd2) && std::isfinite(rep.diversity),
            "evaluate_samples: non-finite metric");
    return rep;
}

// Per-class teacher rollouts used as the reference side of every evaluation.
template <typename T>
std::vector<Tensor<T>> make_reference_sets(const VelocityFn<T>& teacher,
                                           const MixtureSpec<T>& world, std::size_t steps,
                                           std::size_t per_class, T shift,
                                           std::uint64_t seed, const std::string& stream) {
    std::vector<Tensor<T>> out;
    Rng rng = Rng::derive(seed, stream);
    for (std::size_t c = 0; c < world.classes; ++c) {
        Tensor<T> noise = rng.randn<T>({per_class, world.dim});
        auto res = euler_sample(teacher, Schedule<T>::uniform(steps, shift), noise,
                                EulerOptions<T>{static_cast<int>(c), std::nullopt, {}});
        out.push_back(std::move(res.x0));
    }
    return out;
}

// Draw fresh noise per class, push it through the provided sampler, and
// score the result. The sampler sees (condition, noise) and returns clean
// outputs; evaluation randomness never touches training streams.
template <typename T>
EvalReport evaluate_generator(
    const std::function<Tensor<T>(int, const Tensor<T>&)>& sample_fn,
    const std::vector<Tensor<T>>& per_class_refs, const MixtureSpec<T>& world,
    std::size_t per_class, std::uint64_t seed, const std::string& stream) {
    require(per_class >= 4, "evaluate_generator: need at least four samples per class");
    Rng rng = Rng::derive(seed, stream);
    std::vector<Tensor<T>> sets;
    for (std::size_t c = 0; c < world.classes; ++c) {
        Tensor<T> noise = rng.randn<T>({per_class, world.dim});
        sets.push_back(sample_fn(static_cast<int>(c), noise));
    }
    return evaluate_samples(sets, per_class_refs, world);
}

}  // namespace fxdl
