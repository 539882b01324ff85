#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "fxdl/compensator.hpp"
#include "fxdl/denoiser.hpp"
#include "fxdl/diffusion.hpp"
#include "fxdl/discriminator.hpp"
#include "fxdl/grad_eval.hpp"
#include "fxdl/optim.hpp"

namespace fxdl {

// ---- adversarial objectives ----

// Non-saturating generator loss, mean(-log D(fake)), written as
// softplus(-logit) so saturated critics cannot produce log(0).
template <typename T>
Var adv_generator_loss(Graph<T>& g, const Discriminator<T>& disc, Var fake) {
    return g.mean(g.softplus(g.scale(disc.logits(g, fake), T(-1))));
}

// Critic loss mean(-log D(real)) + mean(log D(fake)); the second term is
// -softplus(-logit) by the same identity.
template <typename T>
Var adv_discriminator_loss(Graph<T>& g, const Discriminator<T>& disc, Var real, Var fake) {
    Var on_real = g.mean(g.softplus(g.scale(disc.logits(g, real), T(-1))));
    Var on_fake = g.mean(g.softplus(g.scale(disc.logits(g, fake), T(-1))));
    return g.sub(on_real, on_fake);
}

template <typename T>
struct AdvLosses {
    T generator;
    T discriminator;
};

// Value-only evaluation of both objectives on fixed batches.
template <typename T>
AdvLosses<T> adv_losses(const Discriminator<T>& disc, const Tensor<T>& fake,
                        const Tensor<T>& real) {
    require(fake.cols() == real.cols(), "adv_losses: data dim mismatch");
    Graph<T> g(false);
    AdvLosses<T> out;
    out.generator = g.val(adv_generator_loss(g, disc, g.constant(fake))).v[0];
    out.discriminator =
        g.val(adv_discriminator_loss(g, disc, g.constant(real), g.constant(fake))).v[0];
    return out;
}

// ---- caching arrangements ----

// Disjoint block spans skipped at the second step, each with its own
// compensation module predicting its next-step contribution. The usual
// arrangement is one span and one module; per-block compensation uses one
// width-one span per block.
template <typename T>
struct CacheSetup {
    std::vector<SegmentSpec> segments;
    std::vector<Compensator<T>*> comps;  // parallel to segments, non-owning

    void validate() const {
        require(!segments.empty(), "CacheSetup: no segments");
        require(segments.size() == comps.size(), "CacheSetup: one module per segment");
        for (std::size_t i = 0; i < segments.size(); ++i) {
            require(segments[i].first <= segments[i].last, "CacheSetup: inverted segment");
            require(comps[i] != nullptr, "CacheSetup: missing module");
            if (i) require(segments[i - 1].last < segments[i].first,
                           "CacheSetup: segments must be disjoint and ascending");
        }
    }

    static CacheSetup single(const SegmentSpec& seg, Compensator<T>* comp) {
        return {{seg}, {comp}};
    }
    static CacheSetup per_block(const SegmentSpec& seg, std::vector<Compensator<T>>& comps) {
        CacheSetup s;
        require(comps.size() == seg.last - seg.first + 1,
                "CacheSetup: per-block arrangement needs one module per block");
        for (std::size_t b = seg.first; b <= seg.last; ++b) {
            s.segments.push_back({b, b});
            s.comps.push_back(&comps[b - seg.first]);
        }
        return s;
    }
};

// ---- two-step inference path ----

template <typename T>
struct InferencePath {
    Var x0_hat;                       // final clean prediction, graph-tracked
    Var v2;                           // second-step velocity, graph-tracked
    Tensor<T> x_t1;                   // mid state after the first step, detached
    std::optional<Tensor<T>> delta0;  // first recorded segment contribution
    std::vector<Tensor<T>> deltas;    // all recorded segment contributions
};

// Walk the two-step schedule the student actually serves. The first step is
// a full forward outside the graph (its activations carry no gradients) that
// records segment contributions when spans are configured; the second step
// enters the caller's graph, either as a full forward or with the spans
// skipped and their compensated first-step contributions injected. The clean
// output is the exact jump x0 = x - t v from the mid state.
template <typename T>
InferencePath<T> generate_inference_path(Graph<T>& g, const BlockStackModel<T>& gen,
                                         const CacheSetup<T>* cache,
                                         const Schedule<T>& sched, const Tensor<T>& x_t0,
                                         std::optional<int> cond, bool cache_on) {
    sched.validate();
    require(sched.steps() == 2, "generate_inference_path: schedule must have two steps");
    require(!cache_on || cache != nullptr,
            "generate_inference_path: cache enabled without a configured segment");
    if (cache) cache->validate();

    InferencePath<T> out;
    std::vector<SegmentSpec> rec;
    if (cache) rec = cache->segments;
    {
        Graph<T> g1(false);
        auto step1 = gen.forward(g1, g1.constant(x_t0), sched.t[0], cond, rec);
        const Tensor<T>& v1 = g1.val(step1.v);
        T dt = sched.t[1] - sched.t[0];
        out.x_t1 = x_t0;
        for (std::size_t i = 0; i < out.x_t1.numel(); ++i) out.x_t1.v[i] += dt * v1.v[i];
        for (const auto& tap : step1.taps) out.deltas.push_back(g1.val(tap.delta));
        if (!out.deltas.empty()) out.delta0 = out.deltas.front();
    }

    if (cache_on) {
        std::vector<typename BlockStackModel<T>::Injection> inj;
        for (std::size_t i = 0; i < cache->segments.size(); ++i)
            inj.push_back({cache->segments[i],
                           cache->comps[i]->apply(g, g.constant(out.deltas[i]))});
        out.v2 = gen.forward(g, g.constant(out.x_t1), sched.t[1], cond, {}, inj).v;
    } else {
        out.v2 = gen.forward(g, g.constant(out.x_t1), sched.t[1], cond).v;
    }
    out.x0_hat = g.add(g.constant(out.x_t1), g.scale(out.v2, -sched.t[1]));
    return out;
}

// Single-span arrangement, the common case.
template <typename T>
InferencePath<T> generate_inference_path(Graph<T>& g, const BlockStackModel<T>& gen,
                                         const Compensator<T>* phi,
                                         const Schedule<T>& sched, const Tensor<T>& x_t0,
                                         std::optional<int> cond, bool cache_on,
                                         const std::optional<SegmentSpec>& segment) {
    require(!cache_on || segment.has_value(),
            "generate_inference_path: cache enabled without a configured segment");
    require(!cache_on || phi != nullptr,
            "generate_inference_path: cache enabled without a compensator");
    if (!segment)
        return generate_inference_path<T>(g, gen, nullptr, sched, x_t0, cond, false);
    CacheSetup<T> setup = CacheSetup<T>::single(*segment, const_cast<Compensator<T>*>(phi));
    return generate_inference_path<T>(g, gen, &setup, sched, x_t0, cond, cache_on);
}

// Value-only convenience for critics, metrics, and gap probes.
template <typename T>
Tensor<T> inference_path_value(const BlockStackModel<T>& gen, const CacheSetup<T>* cache,
                               const Schedule<T>& sched, const Tensor<T>& x_t0,
                               std::optional<int> cond, bool cache_on) {
    Graph<T> g(false);
    return g.val(
        generate_inference_path<T>(g, gen, cache, sched, x_t0, cond, cache_on).x0_hat);
}

template <typename T>
Tensor<T> inference_path_value(const BlockStackModel<T>& gen, const Compensator<T>* phi,
                               const Schedule<T>& sched, const Tensor<T>& x_t0,
                               std::optional<int> cond, bool cache_on,
                               const std::optional<SegmentSpec>& segment) {
    Graph<T> g(false);
    return g.val(generate_inference_path<T>(g, gen, phi, sched, x_t0, cond, cache_on, segment)
                     .x0_hat);
}

// Root-mean-square output distance between the cached and the full path on
// the same noise; the yardstick for what compensation buys.
template <typename T>
T cached_full_gap(const BlockStackModel<T>& gen, const CacheSetup<T>& cache,
                  const Schedule<T>& sched, const Tensor<T>& x_t0, std::optional<int> cond) {
    Tensor<T> full = inference_path_value<T>(gen, nullptr, sched, x_t0, cond, false);
    Tensor<T> cached = inference_path_value<T>(gen, &cache, sched, x_t0, cond, true);
    double acc = 0;
    for (std::size_t i = 0; i < full.numel(); ++i) {
        double d = static_cast<double>(full.v[i]) - static_cast<double>(cached.v[i]);
        acc += d * d;
    }
    return static_cast<T>(std::sqrt(acc / static_cast<double>(full.numel())));
}

template <typename T>
T cached_full_gap(const BlockStackModel<T>& gen, const Compensator<T>& phi,
                  const SegmentSpec& segment, const Schedule<T>& sched,
                  const Tensor<T>& x_t0, std::optional<int> cond) {
    CacheSetup<T> setup =
        CacheSetup<T>::single(segment, const_cast<Compensator<T>*>(&phi));
    return cached_full_gap<T>(gen, setup, sched, x_t0, cond);
}

// ---- reference sampling ----

// Multi-step teacher rollout from the identical starting noise, giving every
// fake sample a deterministically paired realistic counterpart.
template <typename T>
Tensor<T> reference_sample(const VelocityFn<T>& teacher, const Tensor<T>& x_t0,
                           std::optional<int> cond, std::size_t steps = 8, T shift = T(3)) {
    require(steps >= 2, "reference_sample: needs at least two steps");
    auto res = euler_sample(teacher, Schedule<T>::uniform(steps, shift), x_t0,
                            EulerOptions<T>{cond, std::nullopt, {}});
    return res.x0;
}

// ---- distillation side objectives ----

template <typename T>
struct KdTerms {
    Var feat;  // compensated contribution vs the true second-step contribution
    Var out;   // cached velocity vs the full second-step velocity
};

// Extra supervision for the compensator against ground truth obtained from a
// redundant full second-step forward. Off by default; kept for ablations.
template <typename T>
KdTerms<T> kd_losses(Graph<T>& g, const Compensator<T>& phi, const Tensor<T>& delta0,
                     const Tensor<T>& delta1, const Tensor<T>& v_full, Var v_cache) {
    KdTerms<T> out;
    out.feat = g.mse(g.constant(delta1), phi.apply(g, g.constant(delta0)));
    out.out = g.mse(g.constant(v_full), v_cache);
    return out;
}

// ---- stage II loop ----

template <typename T>
struct Stage2Config {
    std::size_t iters = 2000;    // joint refinement cap
    std::size_t warmup = 500;    // compensator-only iterations before the cap
    std::size_t ttur = 3;        // generator and compensator update period
    std::size_t batch = 32;
    std::size_t ref_steps = 8;   // teacher rollout length for references
    std::size_t holdout = 32;    // held-out noise rows for the gap probe
    T shift = T(3);
    T lr_gen = T(5e-5);
    T lr_phi = T(5e-3);   // compensator learns orders faster than the generator
    T lr_disc = T(5e-4);  // critic in between
    T beta1 = T(0.9);
    T beta2 = T(0.95);
    T weight_decay = T(0);
    bool cache_on = false;
    std::optional<SegmentSpec> segment;
    T kd_feat_weight = T(0);
    T kd_out_weight = T(0);

    void validate() const {
        require(iters >= 1 && batch >= 1, "Stage2Config: empty run");
        require(ttur >= 1, "Stage2Config: ttur must be positive");
        require(ref_steps >= 2, "Stage2Config: reference rollout too short");
        require(kd_feat_weight >= T(0) && kd_out_weight >= T(0),
                "Stage2Config: negative distillation weight");
        require((kd_feat_weight == T(0) && kd_out_weight == T(0)) || cache_on,
                "Stage2Config: distillation terms need the cache path");
        require(lr_gen > T(0) && lr_phi > T(0) && lr_disc > T(0),
                "Stage2Config: learning rates must be positive");
    }
};

template <typename T>
struct Stage2LogRow {
    std::size_t iter;
    T adv_g;      // generator objective on update iterations, else 0
    T adv_d;      // critic objective, every iteration
    T cache_gap;  // held-out cached-vs-full distance, 0 when the cache is off
};

namespace detail {

template <typename T>
ParamSet<T> collect_grads(const Graph<T>& g, const ParamSet<T>& params) {
    ParamSet<T> out;
    for (std::size_t i = 0; i < params.size(); ++i)
        out.add(params.name(i), g.grad(&params[i]));
    return out;
}

// One adversarial refinement phase along the served inference path. The
// critic trains every iteration against teacher references paired by noise;
// the generator and the compensation modules descend the generator objective
// every `ttur` iterations, ahead of the critic's update. `freeze_theta`
// keeps the generator's weights untouched, which turns the phase into
// compensator warmup. Every class holds a slice of every batch: the critic
// always sees the whole mixture, so no update favors one class's region.
template <typename T>
std::vector<Stage2LogRow<T>> refine_phase(
    BlockStackModel<T>& gen, CacheSetup<T>* cache, Discriminator<T>& disc,
    const VelocityFn<T>& teacher, const Stage2Config<T>& cfg, std::size_t iters,
    std::uint64_t seed, const char* stream, bool freeze_theta,
    const std::function<void(std::size_t, const BlockStackModel<T>&)>& on_checkpoint = {},
    std::size_t checkpoint_every = 0) {
    cfg.validate();
    const std::size_t classes = gen.config().classes;
    const std::size_t dim = gen.config().data_dim;
    Schedule<T> sched = Schedule<T>::uniform(2, cfg.shift);
    CacheSetup<T>* used = cfg.cache_on ? cache : nullptr;
    require(!cfg.cache_on || cache != nullptr, "refine_phase: cache enabled without setup");
    if (used) used->validate();
    bool kd = cfg.kd_feat_weight > T(0) || cfg.kd_out_weight > T(0);
    require(!kd || (used && used->segments.size() == 1),
            "refine_phase: distillation terms need a single cached segment");

    std::string base(stream);
    Rng noise_rng = Rng::derive(seed, base + "/noise");
    Rng pick_rng = Rng::derive(seed, base + "/pick");
    Rng holdout_rng = Rng::derive(seed, base + "/holdout");

    auto gen_opt = OptState<T>::init(gen.params(), cfg.lr_gen, cfg.beta1, cfg.beta2,
                                     cfg.weight_decay);
    std::vector<OptState<T>> phi_opts;
    if (used)
        for (Compensator<T>* c : used->comps)
            phi_opts.push_back(OptState<T>::init(c->params(), cfg.lr_phi, cfg.beta1,
                                                 cfg.beta2, cfg.weight_decay));
    auto disc_opt = OptState<T>::init(disc.params(), cfg.lr_disc, cfg.beta1, cfg.beta2,
                                      cfg.weight_decay);

    // fixed gap probe: the same noise rows for every class, drawn once
    std::size_t per_class = std::max<std::size_t>(1, cfg.holdout / classes);
    Tensor<T> probe = holdout_rng.randn<T>({per_class, dim});

    std::vector<Stage2LogRow<T>> log;
    log.reserve(iters);
    for (std::size_t it = 0; it < iters; ++it) {
        int cond = static_cast<int>(pick_rng.uniform_index(classes));
        Tensor<T> x_t0 = noise_rng.randn<T>({cfg.batch, dim});
        Tensor<T> x_ref = reference_sample(teacher, x_t0, cond, cfg.ref_steps, cfg.shift);

        Stage2LogRow<T> row{it, T(0), T(0), T(0)};
        if (it % cfg.ttur == 0) {
            Graph<T> g(true);
            auto path =
                generate_inference_path<T>(g, gen, used, sched, x_t0, cond, cfg.cache_on);
            Var loss = adv_generator_loss(g, disc, path.x0_hat);
            row.adv_g = g.val(loss).v[0];
            if (kd) {
                Graph<T> gf(false);
                auto full = gen.forward(gf, gf.constant(path.x_t1), sched.t[1], cond,
                                        used->segments);
                KdTerms<T> terms = kd_losses<T>(g, *used->comps[0], *path.delta0,
                                                gf.val(full.taps[0].delta), gf.val(full.v),
                                                path.v2);
                loss = g.add(loss, g.add(g.scale(terms.feat, cfg.kd_feat_weight),
                                         g.scale(terms.out, cfg.kd_out_weight)));
            }
            if (!g.val(loss).all_finite())
                throw NumericFailure("refine_phase: non-finite generator objective at iteration " +
                                     std::to_string(it));
            g.backward(loss);
            if (!freeze_theta) {
                ParamSet<T> gg = collect_grads(g, gen.params());
                adamw_step(gen.params(), gg, gen_opt);
            }
            if (used)
                for (std::size_t i = 0; i < used->comps.size(); ++i) {
                    ParamSet<T> pg = collect_grads(g, used->comps[i]->params());
                    adamw_step(used->comps[i]->params(), pg, phi_opts[i]);
                }
        }

        Tensor<T> fake = inference_path_value<T>(gen, used, sched, x_t0, cond, cfg.cache_on);
        {
            Graph<T> g(true);
            Var loss = adv_discriminator_loss(g, disc, g.constant(x_ref), g.constant(fake));
            row.adv_d = g.val(loss).v[0];
            if (!g.val(loss).all_finite())
                throw NumericFailure("refine_phase: non-finite critic objective at iteration " +
                                     std::to_string(it));
            g.backward(loss);
            ParamSet<T> dg = collect_grads(g, disc.params());
            adamw_step(disc.params(), dg, disc_opt);
        }

        if (used) {
            double acc = 0;
            for (std::size_t c = 0; c < classes; ++c)
                acc += static_cast<double>(
                    cached_full_gap<T>(gen, *used, sched, probe, static_cast<int>(c)));
            row.cache_gap = static_cast<T>(acc / static_cast<double>(classes));
        }
        if (!std::isfinite(static_cast<double>(row.adv_d)) ||
            !std::isfinite(static_cast<double>(row.cache_gap)))
            throw NumericFailure("refine_phase: non-finite log value at iteration " +
                                 std::to_string(it));
        log.push_back(row);
        if (checkpoint_every && on_checkpoint && (it + 1) % checkpoint_every == 0)
            on_checkpoint(it + 1, gen);
    }
    return log;
}

}  // namespace detail

// Compensator warmup: the full refinement dynamic with the generator's
// weights pinned. The critic and the compensation modules see exactly what
// joint training will show them; only theta stands still.
template <typename T>
std::vector<Stage2LogRow<T>> warmup_compensator(
    BlockStackModel<T>& gen, CacheSetup<T>& cache, Discriminator<T>& disc,
    const VelocityFn<T>& teacher, const Stage2Config<T>& cfg, std::uint64_t seed,
    const std::function<void(std::size_t, const BlockStackModel<T>&)>& on_checkpoint = {},
    std::size_t checkpoint_every = 0) {
    require(cfg.cache_on, "warmup_compensator: cache must be enabled");
    return detail::refine_phase<T>(gen, &cache, disc, teacher, cfg, cfg.warmup, seed,
                                   "stage2/warmup", true, on_checkpoint, checkpoint_every);
}

template <typename T>
std::vector<Stage2LogRow<T>> warmup_compensator(BlockStackModel<T>& gen, Compensator<T>& phi,
                                                Discriminator<T>& disc,
                                                const VelocityFn<T>& teacher,
                                                const Stage2Config<T>& cfg,
                                                std::uint64_t seed) {
    require(cfg.segment.has_value(), "warmup_compensator: no segment configured");
    CacheSetup<T> setup = CacheSetup<T>::single(*cfg.segment, &phi);
    return warmup_compensator<T>(gen, setup, disc, teacher, cfg, seed);
}

// Joint refinement of the generator and, when caching, the compensation
// modules, supervised only by the critic along the served path.
template <typename T>
std::vector<Stage2LogRow<T>> stage2_loop(
    BlockStackModel<T>& gen, CacheSetup<T>* cache, Discriminator<T>& disc,
    const VelocityFn<T>& teacher, const Stage2Config<T>& cfg, std::uint64_t seed,
    const std::function<void(std::size_t, const BlockStackModel<T>&)>& on_checkpoint = {},
    std::size_t checkpoint_every = 0) {
    return detail::refine_phase<T>(gen, cache, disc, teacher, cfg, cfg.iters, seed,
                                   "stage2/joint", false, on_checkpoint, checkpoint_every);
}

}  // namespace fxdl
