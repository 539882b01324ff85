#include "fxdl/presets.hpp"

#include <filesystem>

#include "fxdl/csv.hpp"
#include "fxdl/runner.hpp"

namespace fs = std::filesystem;

namespace fxdl {

namespace {

std::string span_text(std::size_t a, std::size_t b) {
    return "[" + std::to_string(a) + ", " + std::to_string(b) + "]";
}

std::vector<PresetArm> guidance_arms(const RunConfig& base) {
    PresetArm control{"control", base};
    control.cfg.guidance.alpha = 0.94;
    control.cfg.guidance.w = 7.0;
    PresetArm always{"always-cfg", base};
    always.cfg.guidance.alpha = 1.0;
    always.cfg.guidance.w = 7.0;
    return {control, always};
}

std::vector<PresetArm> alpha_arms(const RunConfig& base) {
    std::vector<PresetArm> arms;
    for (double a : {0.85, 0.90, 0.92, 0.94, 0.97, 1.0}) {
        PresetArm arm{"alpha-" + csv_num(a), base};
        arm.cfg.guidance.alpha = a;
        arms.push_back(std::move(arm));
    }
    return arms;
}

std::vector<PresetArm> curve_arms(const RunConfig& base) {
    std::vector<PresetArm> arms;
    for (const char* c : {"uniform", "a", "b", "c", "d"}) {
        PresetArm arm{std::string("curve-") + c, base};
        arm.cfg.stage1.curve = c;
        arms.push_back(std::move(arm));
    }
    return arms;
}

std::vector<PresetArm> stage_arms(const RunConfig& base) {
    PresetArm uniform_one{"stage1-uniform", base};
    uniform_one.cfg.stage1.curve = "uniform";
    uniform_one.cfg.stage2.enabled = false;
    PresetArm focused_one{"stage1-focused", base};
    focused_one.cfg.stage1.curve = "c";
    focused_one.cfg.stage2.enabled = false;
    PresetArm both{"stage1+2", base};
    both.cfg.stage1.curve = "c";
    both.cfg.stage2.enabled = true;
    return {uniform_one, focused_one, both};
}

std::vector<PresetArm> cache_arms(const RunConfig& base) {
    std::vector<PresetArm> arms;
    for (const char* m : {"none", "naive", "dct"}) {
        PresetArm arm{std::string("cache-") + m, base};
        arm.cfg.cache.mode = m;
        arms.push_back(std::move(arm));
    }
    return arms;
}

std::vector<PresetArm> block_arms(const RunConfig& base) {
    const std::size_t B = base.model.blocks;
    const std::size_t k = base.cache.k;
    const std::size_t ms = std::max<std::size_t>(1, base.cache.min_start);
    if (k < 2 || ms + k > B)
        throw ConfigError("ablation_presets: blocks study needs cache.k >= 2 windows that fit");
    auto with_spans = [&](const char* name, const std::string& spans) {
        PresetArm arm{name, base};
        arm.cfg.cache.mode = "dct";
        arm.cfg.cache.segment = spans;
        return arm;
    };
    std::size_t mid = (ms + (B - k)) / 2;
    std::size_t k_head = k - k / 2, k_tail = k / 2;
    return {with_spans("early", span_text(ms, ms + k - 1)),
            with_spans("middle", span_text(mid, mid + k - 1)),
            with_spans("late", span_text(B - k, B - 1)),
            with_spans("mixed", span_text(ms, ms + k_head - 1) + "+" +
                                    span_text(B - k_tail, B - 1))};
}

std::vector<PresetArm> mlp_arms(const RunConfig& base) {
    PresetArm none{"comp-none", base};
    none.cfg.cache.mode = "none";
    PresetArm segment{"comp-segment", base};
    segment.cfg.cache.mode = "dct";
    segment.cfg.cache.comp = "segment";
    PresetArm perblock{"comp-perblock", base};
    perblock.cfg.cache.mode = "dct";
    perblock.cfg.cache.comp = "perblock";
    return {none, segment, perblock};
}

std::vector<PresetArm> kd_arms(const RunConfig& base) {
    PresetArm off{"kd-off", base};
    off.cfg.cache.mode = "dct";
    off.cfg.cache.comp = "segment";
    off.cfg.stage2.kd_feat = 0.0;
    off.cfg.stage2.kd_out = 0.0;
    PresetArm on{"kd-on", base};
    on.cfg.cache.mode = "dct";
    on.cfg.cache.comp = "segment";
    on.cfg.stage2.kd_feat = 1.0;
    on.cfg.stage2.kd_out = 1.0;
    return {off, on};
}

}  // namespace

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"guidance", "alpha-sweep", "curves",
                                                   "stages",   "cache",       "blocks",
                                                   "mlp",      "kd"};
    return names;
}

std::vector<PresetArm> ablation_presets(const std::string& preset, const RunConfig& base) {
    std::vector<PresetArm> arms;
    if (preset == "guidance")
        arms = guidance_arms(base);
    else if (preset == "alpha-sweep")
        arms = alpha_arms(base);
    else if (preset == "curves")
        arms = curve_arms(base);
    else if (preset == "stages")
        arms = stage_arms(base);
    else if (preset == "cache")
        arms = cache_arms(base);
    else if (preset == "blocks")
        arms = block_arms(base);
    else if (preset == "mlp")
        arms = mlp_arms(base);
    else if (preset == "kd")
        arms = kd_arms(base);
    else
        throw ConfigError("ablation_presets: unknown preset '" + preset + "'");
    for (const auto& arm : arms) validate_config(arm.cfg);
    return arms;
}

std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      std::size_t seeds) {
    require(seeds >= 1, "run_ablation: need at least one seed");
    auto arms = ablation_presets(preset, base);
    fs::path root = fs::path(base.out) / preset;
    fs::create_directories(root);
    CsvWriter summary(root / "summary.csv",
                      {"preset", "arm", "seed", "mode_coverage", "hq_fraction", "diversity",
                       "mmd2", "condition_accuracy"});

    std::vector<AblationRow> rows;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        RunConfig shared = base;
        shared.seed = seed;
        shared.out = (root / "shared" / ("seed" + std::to_string(seed))).string();
        shared.run_id = "shared";
        run_train_teacher(shared);
        fs::path teacher_src = run_paths(shared).teacher;

        for (const auto& arm : arms) {
            RunConfig cfg = arm.cfg;
            cfg.seed = seed;
            cfg.out = (root / arm.name / ("seed" + std::to_string(seed))).string();
            cfg.run_id = arm.name;
            fs::create_directories(cfg.out);
            fs::copy_file(teacher_src, run_paths(cfg).teacher,
                          fs::copy_options::overwrite_existing);
            EvalReport rep = cfg.stage2.enabled ? run_distill_stage2(cfg)
                                                : run_distill_stage1(cfg);
            summary.row({preset, arm.name, csv_num(seed), csv_num(rep.mode_coverage),
                         csv_num(rep.hq_fraction), csv_num(rep.diversity), csv_num(rep.mmd2),
                         csv_num(rep.condition_accuracy)});
            summary.flush();
            rows.push_back({arm.name, seed, rep});
        }
    }
    return rows;
}

}  // namespace fxdl
