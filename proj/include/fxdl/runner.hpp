#pragma once

#include <cstddef>
#include <filesystem>

#include "fxdl/cache.hpp"
#include "fxdl/config.hpp"
#include "fxdl/metrics.hpp"

namespace fxdl {

// File locations inside one run directory. Training commands create what
// they need on demand: stage two trains its own stage-one input when the
// checkpoint is absent, and so on down to the teacher.
struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path config;      // resolved configuration of the last command
    std::filesystem::path teacher;     // guided teacher weights
    std::filesystem::path stage1;      // generator after focused distillation
    std::filesystem::path fake;        // fake score model paired with stage1
    std::filesystem::path stage2;      // generator after adversarial refinement
    std::filesystem::path disc;        // critic weights
    std::filesystem::path cache_plan;  // resolved cached spans, one "first last" per line
    std::filesystem::path stage1_log, stage2_log, eval, profile, samples;

    std::filesystem::path comp(std::size_t i) const {
        return dir / ("comp" + std::to_string(i) + ".fxdl");
    }
};

RunPaths run_paths(const RunConfig& cfg);

// run_id column written into eval.csv; defaults to the output directory leaf.
std::string resolve_run_id(const RunConfig& cfg);

// Each command validates the config, trains or loads its inputs, writes its
// artifacts, and returns a summary value for the caller to print. All model
// state is stored in 32-bit floats, so a save/load cycle is bitwise exact
// and a resumed phase sees the same weights a continuous run would.
double run_train_teacher(const RunConfig& cfg, bool retrain = false);
EvalReport run_distill_stage1(const RunConfig& cfg);
EvalReport run_distill_stage2(const RunConfig& cfg);
ReuseProfile<float> run_profile_cache(const RunConfig& cfg);
EvalReport run_sample(const RunConfig& cfg, std::size_t steps, std::size_t per_class);
EvalReport run_eval(const RunConfig& cfg);

}  // namespace fxdl
