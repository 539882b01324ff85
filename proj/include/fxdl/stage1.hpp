#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "fxdl/denoiser.hpp"
#include "fxdl/diffusion.hpp"
#include "fxdl/grad_eval.hpp"
#include "fxdl/optim.hpp"
#include "fxdl/toyworld.hpp"

namespace fxdl {

// ---- timestep sampling ----

// Truncated normal over the unshifted position u in (0,1], drawn by inverse
// CDF (no rejection), then warped by the noise shift. An infinite spread
// degenerates to the uniform draw exactly, which is also the analytic limit
// of the inverse-CDF construction.
template <typename T>
struct ImportanceSampler {
    T center = T(0.5);
    T spread = T(0.2);
    T shift = T(3);

    void validate() const {
        require(spread > T(0), "ImportanceSampler: spread must be positive");
        require(shift > T(0), "ImportanceSampler: shift must be positive");
    }

    T draw_u(Rng& rng) const {
        validate();
        double u;
        if (!std::isfinite(static_cast<double>(spread))) {
            u = rng.uniform_open();
        } else {
            double mu = static_cast<double>(center), sd = static_cast<double>(spread);
            double lo = normal_cdf((0.0 - mu) / sd);
            double hi = normal_cdf((1.0 - mu) / sd);
            double p = lo + rng.uniform_open() * (hi - lo);
            u = mu + sd * normal_icdf(p);
        }
        u = std::min(std::max(u, 1e-12), 1.0);
        return static_cast<T>(u);
    }

    T draw_t(Rng& rng) const { return shift_time(draw_u(rng), shift); }

    // Named focus curves; "uniform" disables the preference entirely.
    static ImportanceSampler preset(const std::string& name, T shift = T(3)) {
        if (name == "uniform")
            return {T(0.5), std::numeric_limits<T>::infinity(), shift};
        if (name == "a") return {T(0.6), T(0.25), shift};
        if (name == "b") return {T(0.5), T(0.3), shift};
        if (name == "c") return {T(0.5), T(0.2), shift};
        if (name == "d") return {T(0.3), T(0.2), shift};
        throw ContractViolation("ImportanceSampler: unknown preset " + name);
    }
};

// ---- teacher training ----

template <typename T>
struct TeacherTrainConfig {
    std::size_t iters = 3000;
    std::size_t batch = 128;
    T lr = T(3e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T weight_decay = T(1e-4);
    T cond_dropout = T(0.1);  // probability of replacing the condition by null
    T shift = T(3);
};

// Velocity matching on fresh world draws: v_target = eps - x0 along the
// straight noising path. Condition dropout trains the null row so guided
// sampling has a real unconditional branch to lean on.
template <typename T>
std::vector<T> train_teacher(BlockStackModel<T>& model, const MixtureSpec<T>& world,
                             const TeacherTrainConfig<T>& cfg, std::uint64_t seed) {
    require(cfg.iters >= 1 && cfg.batch >= 1, "train_teacher: empty run");
    require(cfg.cond_dropout >= T(0) && cfg.cond_dropout < T(1),
            "train_teacher: cond_dropout outside [0,1)");
    world.validate();
    Rng data_rng = Rng::derive(seed, "teacher/data");
    Rng t_rng = Rng::derive(seed, "teacher/t");
    Rng pick_rng = Rng::derive(seed, "teacher/cond");
    auto opt = OptState<T>::init(model.params(), cfg.lr, cfg.beta1, cfg.beta2,
                                 cfg.weight_decay);
    std::vector<T> history;
    history.reserve(cfg.iters);
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        std::optional<int> cond = static_cast<int>(pick_rng.uniform_index(world.classes));
        if (pick_rng.uniform() < static_cast<double>(cfg.cond_dropout)) cond.reset();
        Tensor<T> x0 = sample_world(world, cond, cfg.batch, data_rng);
        Tensor<T> eps = data_rng.randn<T>({cfg.batch, world.dim});
        T t = shift_time(static_cast<T>(t_rng.uniform_open()), cfg.shift);
        Tensor<T> xt = add_noise(x0, eps, t);
        Tensor<T> target = eps;
        for (std::size_t i = 0; i < target.numel(); ++i) target.v[i] -= x0.v[i];
        auto res = grad_eval<T>(model.params(), [&](Graph<T>& g) {
            Var v = model.forward(g, g.constant(xt), t, cond).v;
            return g.mse(v, g.constant(target));
        });
        adamw_step(model.params(), res.grads, opt);
        history.push_back(res.loss);
    }
    return history;
}

// Best achievable velocity-matching loss per dimension for a single isotropic
// Gaussian mode: the conditional variance of v = eps - x0 given x_t.
template <typename T>
double bayes_velocity_floor(T sigma, T t) {
    double s = static_cast<double>(sigma), tt = static_cast<double>(t);
    double a = 1.0 - tt;
    double var_xt = a * a * s * s + tt * tt;
    double cov = tt - a * s * s;
    return (1.0 + s * s) - cov * cov / var_xt;
}

// Same floor averaged over the shifted-uniform training-t distribution.
template <typename T>
double bayes_velocity_floor_shifted(T sigma, T shift, std::size_t grid = 2048) {
    double acc = 0;
    for (std::size_t i = 0; i < grid; ++i) {
        double u = (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
        acc += bayes_velocity_floor(sigma, shift_time(static_cast<T>(u), shift));
    }
    return acc / static_cast<double>(grid);
}

// ---- few-step simulation ----

// Walk the first `steps` Euler segments of the schedule from pure noise,
// without gradient tracking. steps=0 returns the noise itself; after i steps
// the state sits at noise level sched.t[i].
template <typename T>
Tensor<T> backward_simulate(const BlockStackModel<T>& gen, const Schedule<T>& sched,
                            std::size_t steps, std::optional<int> cond, Tensor<T> noise) {
    sched.validate();
    require(steps < sched.steps(), "backward_simulate: step count exceeds schedule");
    for (std::size_t i = 0; i < steps; ++i) {
        Tensor<T> v = gen.velocity(noise, sched.t[i], cond);
        T dt = sched.t[i + 1] - sched.t[i];
        for (std::size_t j = 0; j < noise.numel(); ++j) noise.v[j] += dt * v.v[j];
    }
    return noise;
}

// ---- distribution-matching gradient ----

// Clean-sample predictor at a noise level; the condition is bound by the
// caller.
template <typename T>
using X0Fn = std::function<Tensor<T>(const Tensor<T>&, T)>;

template <typename T>
struct DmdSignal {
    Tensor<T> d;        // per-element gradient of the matching loss wrt x0_hat
    Tensor<T> x_noised; // where the two score models were probed
    Tensor<T> real_x0;  // real branch prediction (diagnostics)
    T normalizer;       // batch mean of the per-sample scales (diagnostics)
    T mean_abs;         // mean |d|, the logged surrogate magnitude
};

// Difference of fake and real clean-sample predictions at a fresh noising of
// the generator output. Each sample is scaled by its own mean prediction
// error |x0_hat - real_x0| so the update magnitude stays comparable across
// timesteps and across easy and hard samples alike.
template <typename T>
DmdSignal<T> dmd_signal(const Tensor<T>& x0_hat, const Tensor<T>& eps, T t,
                        const X0Fn<T>& real_x0, const X0Fn<T>& fake_x0) {
    require(x0_hat.same_shape(eps), "dmd_signal: shape mismatch");
    require(t > T(0) && t <= T(1), "dmd_signal: t outside (0,1]");
    DmdSignal<T> sig;
    sig.x_noised = add_noise(x0_hat, eps, t);
    sig.real_x0 = real_x0(sig.x_noised, t);
    Tensor<T> fake = fake_x0(sig.x_noised, t);
    require(sig.real_x0.same_shape(x0_hat) && fake.same_shape(x0_hat),
            "dmd_signal: predictor shape mismatch");
    const std::size_t rows = x0_hat.rows(), cols = x0_hat.cols();
    sig.d = fake;
    double abs_acc = 0, c_acc = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        double c = 0;
        for (std::size_t j = 0; j < cols; ++j)
            c += std::abs(static_cast<double>(x0_hat.v[i * cols + j]) -
                          static_cast<double>(sig.real_x0.v[i * cols + j]));
        c = std::max(c / static_cast<double>(cols), 1e-8);
        c_acc += c;
        for (std::size_t j = 0; j < cols; ++j) {
            std::size_t k = i * cols + j;
            sig.d.v[k] = static_cast<T>(
                (static_cast<double>(fake.v[k]) - static_cast<double>(sig.real_x0.v[k])) / c);
            abs_acc += std::abs(static_cast<double>(sig.d.v[k]));
        }
    }
    sig.normalizer = static_cast<T>(c_acc / static_cast<double>(rows));
    sig.mean_abs = static_cast<T>(abs_acc / static_cast<double>(sig.d.numel()));
    if (!sig.d.all_finite()) throw NumericFailure("dmd_signal: non-finite gradient");
    return sig;
}

// One flow-matching step of the fake score model toward the generator's
// detached outputs: t uniform then shifted, fresh noise, squared error.
// Touches only the fake model's parameters.
template <typename T>
T fake_score_update(BlockStackModel<T>& fake, const Tensor<T>& x0_hat,
                    std::optional<int> cond, T shift, Rng& rng, OptState<T>& opt) {
    T t = shift_time(static_cast<T>(rng.uniform_open()), shift);
    Tensor<T> eps = rng.randn<T>({x0_hat.rows(), x0_hat.cols()});
    Tensor<T> xt = add_noise(x0_hat, eps, t);
    Tensor<T> target = eps;
    for (std::size_t i = 0; i < target.numel(); ++i) target.v[i] -= x0_hat.v[i];
    auto res = grad_eval<T>(fake.params(), [&](Graph<T>& g) {
        Var v = fake.forward(g, g.constant(xt), t, cond).v;
        return g.mse(v, g.constant(target));
    });
    adamw_step(fake.params(), res.grads, opt);
    return res.loss;
}

// ---- stage I loop ----

template <typename T>
struct Stage1Config {
    std::size_t iters = 1000;   // hard cap for the focused pass
    std::size_t batch = 64;
    std::size_t gen_steps = 4;  // generator schedule length during simulation
    std::size_t ttur = 1;       // generator updated every `ttur` iterations
    T shift = T(3);
    T lr_gen = T(1e-4);
    T lr_fake = T(8e-4);  // fake score model learns faster than the generator
    T beta1 = T(0);
    T beta2 = T(0.999);
    T weight_decay = T(0);
    GuidanceConfig<T> guidance;
    ImportanceSampler<T> sampler = ImportanceSampler<T>::preset("c");

    void validate() const {
        require(iters >= 1 && batch >= 1 && gen_steps >= 1, "Stage1Config: empty run");
        require(ttur >= 1, "Stage1Config: ttur must be positive");
        require(lr_gen > T(0) && lr_fake > T(0), "Stage1Config: learning rates must be positive");
        guidance.validate();
        sampler.validate();
    }
};

template <typename T>
struct Stage1LogRow {
    std::size_t iter;
    T dmd_surrogate;  // mean |d| on generator-update iterations, else 0
    T fake_loss;      // flow-matching loss of the fake score model
    T normalizer;     // DMD scale C (generator-update iterations)
    T t_probe;        // importance-sampled probe level
};

// One-sided distillation against a frozen guided teacher. The generator and
// the fake score model both start from the teacher weights (callers copy);
// the fake model tracks the generator's own output distribution by flow
// matching every iteration, while the generator descends the
// prediction-difference signal every `ttur` iterations. Every class owns a
// slice of the batch in every update, so no single update drags the model
// toward one class's guidance tilt. No real data enters this loop.
template <typename T>
std::vector<Stage1LogRow<T>> stage1_distill(
    BlockStackModel<T>& gen, BlockStackModel<T>& fake, const VelocityFn<T>& teacher,
    const Stage1Config<T>& cfg, std::uint64_t seed,
    const std::function<void(std::size_t, const BlockStackModel<T>&)>& on_checkpoint = {},
    std::size_t checkpoint_every = 0) {
    cfg.validate();
    const std::size_t classes = gen.config().classes;
    const std::size_t dim = gen.config().data_dim;
    require(cfg.batch >= classes, "stage1_distill: batch smaller than class count");
    const std::size_t per = cfg.batch / classes;
    Schedule<T> sched = Schedule<T>::uniform(cfg.gen_steps, cfg.shift);
    Rng noise_rng = Rng::derive(seed, "stage1/noise");
    Rng t_rng = Rng::derive(seed, "stage1/t");
    Rng pick_rng = Rng::derive(seed, "stage1/pick");
    Rng fake_rng = Rng::derive(seed, "stage1/fake");
    auto gen_opt = OptState<T>::init(gen.params(), cfg.lr_gen, cfg.beta1, cfg.beta2,
                                     cfg.weight_decay);
    auto fake_opt = OptState<T>::init(fake.params(), cfg.lr_fake, cfg.beta1, cfg.beta2,
                                      cfg.weight_decay);
    std::vector<Stage1LogRow<T>> log;
    log.reserve(cfg.iters);

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        std::size_t depth = pick_rng.uniform_index(cfg.gen_steps);
        T t_sim = sched.t[depth];
        std::vector<Tensor<T>> x_sim(classes), x0_hat(classes);
        for (std::size_t c = 0; c < classes; ++c) {
            int cond = static_cast<int>(c);
            Tensor<T> start = noise_rng.randn<T>({per, dim});
            x_sim[c] = backward_simulate(gen, sched, depth, cond, std::move(start));
            x0_hat[c] = velocity_to_x0(x_sim[c], gen.velocity(x_sim[c], t_sim, cond), t_sim);
        }

        Stage1LogRow<T> row{it, T(0), T(0), T(0), T(0)};
        if (it % cfg.ttur == 0) {
            T t_probe = cfg.sampler.draw_t(t_rng);
            std::vector<DmdSignal<T>> sigs;
            sigs.reserve(classes);
            double surr = 0, norm = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                int cond = static_cast<int>(c);
                Tensor<T> eps = noise_rng.randn<T>({per, dim});
                auto real_fn = [&](const Tensor<T>& x, T t) {
                    Tensor<T> vc = teacher(x, t, cond);
                    Tensor<T> v = guided_real_prediction<T>(
                        t, cfg.guidance, vc, [&] { return teacher(x, t, std::nullopt); });
                    return velocity_to_x0(x, v, t);
                };
                auto fake_fn = [&](const Tensor<T>& x, T t) {
                    return velocity_to_x0(x, fake.velocity(x, t, cond), t);
                };
                sigs.push_back(dmd_signal<T>(x0_hat[c], eps, t_probe, real_fn, fake_fn));
                surr += static_cast<double>(sigs.back().mean_abs);
                norm += static_cast<double>(sigs.back().normalizer);
            }
            auto gres = grad_eval<T>(gen.params(), [&](Graph<T>& g) {
                Var total;
                for (std::size_t c = 0; c < classes; ++c) {
                    Var v = gen.forward(g, g.constant(x_sim[c]), t_sim,
                                        static_cast<int>(c)).v;
                    Var x0 = g.sub(g.constant(x_sim[c]), g.scale(v, t_sim));
                    Var term = g.sum(g.mul(g.constant(sigs[c].d), x0));
                    total = c == 0 ? term : g.add(total, term);
                }
                return g.scale(total, T(1) / static_cast<T>(per * classes));
            });
            adamw_step(gen.params(), gres.grads, gen_opt);
            row.dmd_surrogate = static_cast<T>(surr / static_cast<double>(classes));
            row.normalizer = static_cast<T>(norm / static_cast<double>(classes));
            row.t_probe = t_probe;
        }

        {
            std::vector<Tensor<T>> xt(classes), target(classes);
            std::vector<T> ts(classes);
            for (std::size_t c = 0; c < classes; ++c) {
                ts[c] = shift_time(static_cast<T>(fake_rng.uniform_open()), cfg.shift);
                Tensor<T> eps = fake_rng.randn<T>({per, dim});
                xt[c] = add_noise(x0_hat[c], eps, ts[c]);
                target[c] = std::move(eps);
                for (std::size_t i = 0; i < target[c].numel(); ++i)
                    target[c].v[i] -= x0_hat[c].v[i];
            }
            auto fres = grad_eval<T>(fake.params(), [&](Graph<T>& g) {
                Var total;
                for (std::size_t c = 0; c < classes; ++c) {
                    Var l = g.mse(fake.forward(g, g.constant(xt[c]), ts[c],
                                               static_cast<int>(c)).v,
                                  g.constant(target[c]));
                    total = c == 0 ? l : g.add(total, l);
                }
                return g.scale(total, T(1) / static_cast<T>(classes));
            });
            adamw_step(fake.params(), fres.grads, fake_opt);
            row.fake_loss = fres.loss;
        }

        if (!std::isfinite(static_cast<double>(row.fake_loss)) ||
            !std::isfinite(static_cast<double>(row.dmd_surrogate)))
            throw NumericFailure("stage1_distill: non-finite loss at iteration " +
                                 std::to_string(it));
        log.push_back(row);
        if (checkpoint_every && on_checkpoint && (it + 1) % checkpoint_every == 0)
            on_checkpoint(it + 1, gen);
    }
    return log;
}

}  // namespace fxdl
