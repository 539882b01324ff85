#include "fxdl/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fxdl/checkpoint.hpp"
#include "fxdl/csv.hpp"
#include "fxdl/eval.hpp"
#include "fxdl/stage1.hpp"
#include "fxdl/stage2.hpp"

namespace fs = std::filesystem;

namespace fxdl {

RunPaths run_paths(const RunConfig& cfg) {
    RunPaths p;
    p.dir = fs::path(cfg.out);
    p.config = p.dir / "config.txt";
    p.teacher = p.dir / "teacher.fxdl";
    p.stage1 = p.dir / "stage1.fxdl";
    p.fake = p.dir / "fake.fxdl";
    p.stage2 = p.dir / "stage2.fxdl";
    p.disc = p.dir / "disc.fxdl";
    p.cache_plan = p.dir / "cache.txt";
    p.stage1_log = p.dir / "stage1_log.csv";
    p.stage2_log = p.dir / "stage2_log.csv";
    p.eval = p.dir / "eval.csv";
    p.profile = p.dir / "profile.csv";
    p.samples = p.dir / "samples.csv";
    return p;
}

std::string resolve_run_id(const RunConfig& cfg) {
    if (!cfg.run_id.empty()) return cfg.run_id;
    std::string leaf = fs::path(cfg.out).filename().string();
    return leaf.empty() ? std::string("run") : leaf;
}

namespace {

struct Ctx {
    RunConfig cfg;  // post-resolution: guidance force already applied
    RunPaths paths;
    std::string run_id;
    MixtureSpec<float> world;
    DenoiserConfig model_cfg;
};

Ctx make_ctx(RunConfig cfg) {
    validate_config(cfg);
    if (cfg.teacher.cond_dropout == 0.0 && cfg.guidance.w > 1.0) {
        std::fprintf(stderr,
                     "warning: teacher has no unconditional branch "
                     "(teacher.cond_dropout = 0); forcing guidance.w = 1\n");
        cfg.guidance.w = 1.0;
    }
    Ctx ctx;
    ctx.run_id = resolve_run_id(cfg);
    ctx.paths = run_paths(cfg);
    ctx.world = make_world<float>(cfg.world);
    ctx.model_cfg.data_dim = ctx.world.dim;
    ctx.model_cfg.classes = ctx.world.classes;
    ctx.model_cfg.hidden_dim = cfg.model.hidden;
    ctx.model_cfg.blocks = cfg.model.blocks;
    ctx.model_cfg.time_features = cfg.model.time_features;
    ctx.cfg = std::move(cfg);
    fs::create_directories(ctx.paths.dir);
    return ctx;
}

void write_config(const Ctx& ctx) {
    std::ofstream out(ctx.paths.config, std::ios::trunc);
    out << serialize_config(ctx.cfg);
    require(out.good(), "runner: cannot write " + ctx.paths.config.string());
}

BlockStackModel<float> fresh_model(const Ctx& ctx) {
    return BlockStackModel<float>(ctx.model_cfg, Rng::derive(ctx.cfg.seed, "init/teacher"));
}

GuidanceConfig<float> guidance_of(const Ctx& ctx) {
    return {static_cast<float>(ctx.cfg.guidance.w),
            static_cast<float>(ctx.cfg.guidance.alpha)};
}

double train_teacher_now(const Ctx& ctx, BlockStackModel<float>& teacher) {
    TeacherTrainConfig<float> tc;
    tc.iters = ctx.cfg.teacher.iters;
    tc.batch = ctx.cfg.teacher.batch;
    tc.lr = static_cast<float>(ctx.cfg.teacher.lr);
    tc.cond_dropout = static_cast<float>(ctx.cfg.teacher.cond_dropout);
    tc.shift = static_cast<float>(ctx.cfg.shift);
    auto hist = train_teacher(teacher, ctx.world, tc, ctx.cfg.seed);
    save_checkpoint(teacher.params(), ctx.paths.teacher);
    std::size_t tail = std::max<std::size_t>(1, hist.size() / 10);
    double acc = 0;
    for (std::size_t i = hist.size() - tail; i < hist.size(); ++i)
        acc += static_cast<double>(hist[i]);
    return acc / static_cast<double>(tail);
}

BlockStackModel<float> ensure_teacher(const Ctx& ctx) {
    BlockStackModel<float> m = fresh_model(ctx);
    if (fs::exists(ctx.paths.teacher))
        m.assign(load_checkpoint(ctx.paths.teacher));
    else
        train_teacher_now(ctx, m);
    return m;
}

// ---- evaluation plumbing ----

const std::vector<std::string>& eval_header() {
    static const std::vector<std::string> h = {"run_id",       "phase",     "iter",
                                               "mode_coverage", "hq_fraction", "diversity",
                                               "mmd2",          "condition_accuracy"};
    return h;
}

void append_eval_row(const Ctx& ctx, const std::string& phase, std::size_t iter,
                     const EvalReport& r) {
    CsvWriter w(ctx.paths.eval, eval_header(), true);
    w.row({ctx.run_id, phase, csv_num(iter), csv_num(r.mode_coverage),
           csv_num(r.hq_fraction), csv_num(r.diversity), csv_num(r.mmd2),
           csv_num(r.condition_accuracy)});
}

std::vector<Tensor<float>> references(const Ctx& ctx, const BlockStackModel<float>& teacher) {
    return make_reference_sets<float>(teacher.velocity_fn(), ctx.world,
                                      ctx.cfg.eval.ref_steps, ctx.cfg.eval.per_class,
                                      static_cast<float>(ctx.cfg.shift), ctx.cfg.seed,
                                      "eval/refs");
}

// Compensation modules plus the setup that points at them. The vector owns
// the modules; moving the struct keeps element addresses stable.
struct ServingCache {
    std::vector<Compensator<float>> comps;
    CacheSetup<float> setup;
};

ServingCache build_cache_modules(const Ctx& ctx, const std::vector<SegmentSpec>& spans) {
    ServingCache sc;
    if (ctx.cfg.cache.comp == "perblock") {
        for (const auto& span : spans)
            for (std::size_t b = span.first; b <= span.last; ++b) {
                sc.comps.emplace_back(ctx.model_cfg.hidden_dim,
                                      Rng::derive(ctx.cfg.seed, "init/comp", sc.comps.size()));
                sc.setup.segments.push_back({b, b});
            }
    } else {
        for (const auto& span : spans) {
            sc.comps.emplace_back(ctx.model_cfg.hidden_dim,
                                  Rng::derive(ctx.cfg.seed, "init/comp", sc.comps.size()));
            sc.setup.segments.push_back(span);
        }
    }
    for (auto& c : sc.comps) sc.setup.comps.push_back(&c);
    sc.setup.validate();
    return sc;
}

void save_cache(const Ctx& ctx, const ServingCache& sc, const std::vector<SegmentSpec>& spans) {
    std::ofstream out(ctx.paths.cache_plan, std::ios::trunc);
    for (const auto& s : spans) out << s.first << " " << s.last << "\n";
    require(out.good(), "runner: cannot write " + ctx.paths.cache_plan.string());
    for (std::size_t i = 0; i < sc.comps.size(); ++i)
        save_checkpoint(sc.comps[i].params(), ctx.paths.comp(i));
}

std::vector<SegmentSpec> load_cache_plan(const Ctx& ctx) {
    std::ifstream in(ctx.paths.cache_plan);
    if (!in) throw ConfigError("runner: no cache plan at " + ctx.paths.cache_plan.string() +
                               "; run the stage two distillation first");
    std::vector<SegmentSpec> spans;
    std::size_t a = 0, b = 0;
    while (in >> a >> b) spans.push_back({a, b});
    require(!spans.empty(), "runner: empty cache plan");
    return spans;
}

ServingCache load_cache_modules(const Ctx& ctx) {
    ServingCache sc = build_cache_modules(ctx, load_cache_plan(ctx));
    for (std::size_t i = 0; i < sc.comps.size(); ++i) {
        if (!fs::exists(ctx.paths.comp(i)))
            throw ConfigError("runner: missing " + ctx.paths.comp(i).string());
        sc.comps[i].assign(load_checkpoint(ctx.paths.comp(i)));
    }
    return sc;
}

// Draw per-class noise from the shared evaluation stream, push it through
// the serving path, and keep the sets so callers can both score and dump them.
std::vector<Tensor<float>> sample_sets(const Ctx& ctx, const BlockStackModel<float>& model,
                                       const CacheSetup<float>* cache, std::size_t steps,
                                       std::size_t per_class) {
    Schedule<float> sched = Schedule<float>::uniform(steps, static_cast<float>(ctx.cfg.shift));
    Rng rng = Rng::derive(ctx.cfg.seed, "eval/noise");
    std::vector<Tensor<float>> sets;
    for (std::size_t c = 0; c < ctx.world.classes; ++c) {
        Tensor<float> noise = rng.randn<float>({per_class, ctx.world.dim});
        if (cache) {
            require(steps == 2, "sample_sets: cached serving is a two-step path");
            sets.push_back(inference_path_value<float>(model, cache, sched, noise,
                                                       static_cast<int>(c), true));
        } else {
            sets.push_back(euler_sample(model.velocity_fn(), sched, noise,
                                        EulerOptions<float>{static_cast<int>(c), std::nullopt,
                                                            {}})
                               .x0);
        }
    }
    return sets;
}

EvalReport score_model(const Ctx& ctx, const BlockStackModel<float>& model,
                       const CacheSetup<float>* cache, std::size_t steps,
                       const std::vector<Tensor<float>>& refs, std::size_t per_class) {
    return evaluate_samples<float>(sample_sets(ctx, model, cache, steps, per_class), refs,
                                   ctx.world);
}

}  // namespace

// ---- commands ----

double run_train_teacher(const RunConfig& cfg0, bool retrain) {
    Ctx ctx = make_ctx(cfg0);
    BlockStackModel<float> teacher = fresh_model(ctx);
    double loss;
    if (!retrain && fs::exists(ctx.paths.teacher)) {
        teacher.assign(load_checkpoint(ctx.paths.teacher));
        loss = 0;
    } else {
        loss = train_teacher_now(ctx, teacher);
    }
    write_config(ctx);
    return loss;
}

EvalReport run_distill_stage1(const RunConfig& cfg0) {
    Ctx ctx = make_ctx(cfg0);
    BlockStackModel<float> teacher = ensure_teacher(ctx);
    BlockStackModel<float> gen = fresh_model(ctx);
    gen.assign(teacher.params());
    BlockStackModel<float> fake = fresh_model(ctx);
    fake.assign(teacher.params());

    Stage1Config<float> sc;
    sc.iters = ctx.cfg.stage1.iters;
    sc.batch = ctx.cfg.stage1.batch;
    sc.gen_steps = ctx.cfg.stage1.gen_steps;
    sc.ttur = ctx.cfg.stage1.ttur;
    sc.shift = static_cast<float>(ctx.cfg.shift);
    sc.lr_gen = static_cast<float>(ctx.cfg.stage1.lr_gen);
    sc.lr_fake = static_cast<float>(ctx.cfg.stage1.lr_fake);
    sc.guidance = guidance_of(ctx);
    sc.sampler = ImportanceSampler<float>::preset(ctx.cfg.stage1.curve, sc.shift);

    auto refs = references(ctx, teacher);
    std::map<std::size_t, EvalReport> reports;
    auto log = stage1_distill<float>(
        gen, fake, teacher.velocity_fn(), sc, ctx.cfg.seed,
        [&](std::size_t iter, const BlockStackModel<float>& m) {
            reports[iter] =
                score_model(ctx, m, nullptr, sc.gen_steps, refs, ctx.cfg.eval.per_class);
        },
        ctx.cfg.stage1.eval_every);

    CsvWriter w(ctx.paths.stage1_log,
                {"iter", "dmd_surrogate", "fake_loss", "normalizer", "t_probe",
                 "mode_coverage", "diversity", "mmd2"});
    for (const auto& row : log) {
        std::size_t n = row.iter + 1;
        bool gen_iter = row.iter % sc.ttur == 0;
        std::vector<std::string> cells{
            csv_num(n), gen_iter ? csv_num(static_cast<double>(row.dmd_surrogate)) : "",
            csv_num(static_cast<double>(row.fake_loss)),
            gen_iter ? csv_num(static_cast<double>(row.normalizer)) : "",
            gen_iter ? csv_num(static_cast<double>(row.t_probe)) : "", "", "", ""};
        if (auto it = reports.find(n); it != reports.end()) {
            cells[5] = csv_num(it->second.mode_coverage);
            cells[6] = csv_num(it->second.diversity);
            cells[7] = csv_num(it->second.mmd2);
        }
        w.row(cells);
    }
    w.flush();

    save_checkpoint(gen.params(), ctx.paths.stage1);
    save_checkpoint(fake.params(), ctx.paths.fake);
    EvalReport final_report;
    if (auto it = reports.find(sc.iters); it != reports.end())
        final_report = it->second;
    else
        final_report = score_model(ctx, gen, nullptr, sc.gen_steps, refs,
                                   ctx.cfg.eval.per_class);
    append_eval_row(ctx, "stage1", sc.iters, final_report);
    write_config(ctx);
    return final_report;
}

namespace {

ReuseProfile<float> profile_now(const Ctx& ctx, const BlockStackModel<float>& model) {
    std::size_t steps = std::max<std::size_t>(2, ctx.cfg.stage1.gen_steps);
    Schedule<float> sched = Schedule<float>::uniform(steps, static_cast<float>(ctx.cfg.shift));
    auto prof = profile_reuse_error<float>(model, sched, ctx.world,
                                           ctx.cfg.cache.profile_batch, ctx.cfg.seed);
    CsvWriter w(ctx.paths.profile, {"block", "reuse_error"});
    for (std::size_t k = 0; k < prof.e.size(); ++k)
        w.row({csv_num(k), csv_num(static_cast<double>(prof.e[k]))});
    return prof;
}

std::vector<SegmentSpec> resolve_spans(const Ctx& ctx, const BlockStackModel<float>& student) {
    if (ctx.cfg.cache.segment == "auto") {
        auto prof = profile_now(ctx, student);
        return {select_segment(prof, ctx.cfg.cache.k, ctx.cfg.cache.min_start)};
    }
    std::vector<SegmentSpec> spans;
    for (auto [a, b] : parse_segments_value(ctx.cfg.cache.segment)) spans.push_back({a, b});
    return spans;
}

}  // namespace

EvalReport run_distill_stage2(const RunConfig& cfg0) {
    Ctx ctx = make_ctx(cfg0);
    if (!ctx.cfg.stage2.enabled)
        throw ConfigError("runner: stage2.enabled is off in this config");
    BlockStackModel<float> teacher = ensure_teacher(ctx);
    if (!fs::exists(ctx.paths.stage1)) run_distill_stage1(ctx.cfg);
    BlockStackModel<float> gen = fresh_model(ctx);
    gen.assign(load_checkpoint(ctx.paths.stage1));
    Discriminator<float> disc(ctx.world.dim, ctx.cfg.stage2.disc_hidden,
                              Rng::derive(ctx.cfg.seed, "init/disc"));

    Stage2Config<float> sc;
    sc.iters = ctx.cfg.stage2.iters;
    sc.warmup = ctx.cfg.stage2.warmup;
    sc.ttur = ctx.cfg.stage2.ttur;
    sc.batch = ctx.cfg.stage2.batch;
    sc.ref_steps = ctx.cfg.stage2.ref_steps;
    sc.shift = static_cast<float>(ctx.cfg.shift);
    sc.lr_gen = static_cast<float>(ctx.cfg.stage2.lr_gen);
    sc.lr_phi = static_cast<float>(ctx.cfg.stage2.lr_phi);
    sc.lr_disc = static_cast<float>(ctx.cfg.stage2.lr_disc);
    sc.kd_feat_weight = static_cast<float>(ctx.cfg.stage2.kd_feat);
    sc.kd_out_weight = static_cast<float>(ctx.cfg.stage2.kd_out);
    sc.cache_on = ctx.cfg.cache.mode == "dct";

    std::optional<ServingCache> serving;
    std::vector<SegmentSpec> spans;
    if (ctx.cfg.cache.mode != "none") {
        spans = resolve_spans(ctx, gen);
        serving = build_cache_modules(ctx, spans);
    }

    auto refs = references(ctx, teacher);
    std::map<std::size_t, EvalReport> reports;
    const CacheSetup<float>* train_path = sc.cache_on ? &serving->setup : nullptr;
    auto eval_cb = [&](std::size_t iter, const BlockStackModel<float>& m) {
        reports[iter] = score_model(ctx, m, train_path, 2, refs, ctx.cfg.eval.per_class);
    };

    std::vector<Stage2LogRow<float>> warm_log, joint_log;
    if (sc.cache_on) {
        warm_log = warmup_compensator<float>(gen, serving->setup, disc,
                                             teacher.velocity_fn(), sc, ctx.cfg.seed);
        joint_log = stage2_loop<float>(gen, &serving->setup, disc, teacher.velocity_fn(), sc,
                                       ctx.cfg.seed, eval_cb, ctx.cfg.stage2.eval_every);
    } else {
        joint_log = stage2_loop<float>(gen, nullptr, disc, teacher.velocity_fn(), sc,
                                       ctx.cfg.seed, eval_cb, ctx.cfg.stage2.eval_every);
    }

    CsvWriter w(ctx.paths.stage2_log,
                {"phase", "iter", "adv_g", "adv_d", "cache_gap", "mode_coverage",
                 "diversity", "mmd2"});
    auto dump_rows = [&](const char* phase, const std::vector<Stage2LogRow<float>>& rows,
                         bool with_metrics) {
        for (const auto& row : rows) {
            std::size_t n = row.iter + 1;
            bool gen_iter = row.iter % sc.ttur == 0;
            std::vector<std::string> cells{
                phase,
                csv_num(n),
                gen_iter ? csv_num(static_cast<double>(row.adv_g)) : "",
                csv_num(static_cast<double>(row.adv_d)),
                sc.cache_on ? csv_num(static_cast<double>(row.cache_gap)) : "",
                "",
                "",
                ""};
            if (with_metrics)
                if (auto it = reports.find(n); it != reports.end()) {
                    cells[5] = csv_num(it->second.mode_coverage);
                    cells[6] = csv_num(it->second.diversity);
                    cells[7] = csv_num(it->second.mmd2);
                }
            w.row(cells);
        }
    };
    dump_rows("warmup", warm_log, false);
    dump_rows("joint", joint_log, true);
    w.flush();

    save_checkpoint(gen.params(), ctx.paths.stage2);
    save_checkpoint(disc.params(), ctx.paths.disc);
    if (serving) save_cache(ctx, *serving, spans);

    // the serving path includes the cache whenever one is configured, so the
    // final row reflects what sampling will actually do (post-hoc reuse for
    // naive mode, compensated reuse for the trained cache)
    const CacheSetup<float>* served = serving ? &serving->setup : nullptr;
    EvalReport final_report = score_model(ctx, gen, served, 2, refs, ctx.cfg.eval.per_class);
    append_eval_row(ctx, "stage2", sc.iters, final_report);
    write_config(ctx);
    return final_report;
}

ReuseProfile<float> run_profile_cache(const RunConfig& cfg0) {
    Ctx ctx = make_ctx(cfg0);
    BlockStackModel<float> model = fresh_model(ctx);
    if (ctx.cfg.cache.profile_source == "teacher") {
        BlockStackModel<float> teacher = ensure_teacher(ctx);
        model.assign(teacher.params());
    } else {
        if (!fs::exists(ctx.paths.stage1)) run_distill_stage1(ctx.cfg);
        model.assign(load_checkpoint(ctx.paths.stage1));
    }
    auto prof = profile_now(ctx, model);
    write_config(ctx);
    return prof;
}

namespace {

struct Served {
    BlockStackModel<float> model;
    std::optional<ServingCache> cache;
    std::size_t steps;
    std::size_t trained_iters;
};

Served load_served(const Ctx& ctx, std::optional<std::size_t> steps_override) {
    Served s{fresh_model(ctx), std::nullopt, 2, 0};
    if (fs::exists(ctx.paths.stage2)) {
        s.model.assign(load_checkpoint(ctx.paths.stage2));
        s.steps = steps_override.value_or(2);
        s.trained_iters = ctx.cfg.stage2.iters;
        if (ctx.cfg.cache.mode != "none" && s.steps == 2)
            s.cache = load_cache_modules(ctx);
        return s;
    }
    if (fs::exists(ctx.paths.stage1)) {
        s.model.assign(load_checkpoint(ctx.paths.stage1));
        s.steps = steps_override.value_or(ctx.cfg.stage1.gen_steps);
        s.trained_iters = ctx.cfg.stage1.iters;
        return s;
    }
    throw ConfigError("runner: no trained generator under " + ctx.paths.dir.string() +
                      "; run a distillation stage first");
}

}  // namespace

EvalReport run_sample(const RunConfig& cfg0, std::size_t steps, std::size_t per_class) {
    Ctx ctx = make_ctx(cfg0);
    require(steps >= 1, "run_sample: steps must be positive");
    require(per_class >= 4, "run_sample: need at least four samples per class");
    Served s = load_served(ctx, steps);
    BlockStackModel<float> teacher = ensure_teacher(ctx);
    auto refs = references(ctx, teacher);
    const CacheSetup<float>* cache = s.cache ? &s.cache->setup : nullptr;
    auto sets = sample_sets(ctx, s.model, cache, s.steps, per_class);

    std::vector<std::string> header{"cond"};
    for (std::size_t j = 0; j < ctx.world.dim; ++j) header.push_back("x" + std::to_string(j));
    CsvWriter w(ctx.paths.samples, header);
    for (std::size_t c = 0; c < sets.size(); ++c)
        for (std::size_t r = 0; r < sets[c].rows(); ++r) {
            std::vector<std::string> cells{csv_num(c)};
            for (std::size_t j = 0; j < ctx.world.dim; ++j)
                cells.push_back(csv_num(static_cast<double>(sets[c].v[r * ctx.world.dim + j])));
            w.row(cells);
        }
    w.flush();

    EvalReport rep = evaluate_samples<float>(sets, refs, ctx.world);
    append_eval_row(ctx, "sample", s.trained_iters, rep);
    write_config(ctx);
    return rep;
}

EvalReport run_eval(const RunConfig& cfg0) {
    Ctx ctx = make_ctx(cfg0);
    Served s = load_served(ctx, std::nullopt);
    BlockStackModel<float> teacher = ensure_teacher(ctx);
    auto refs = references(ctx, teacher);
    const CacheSetup<float>* cache = s.cache ? &s.cache->setup : nullptr;
    EvalReport rep = score_model(ctx, s.model, cache, s.steps, refs, ctx.cfg.eval.per_class);
    append_eval_row(ctx, "eval", s.trained_iters, rep);
    write_config(ctx);
    return rep;
}

}  // namespace fxdl
