#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fxdl/config.hpp"
#include "fxdl/metrics.hpp"

namespace fxdl {

// One arm of an ablation study: a label plus a config that differs from the
// study's base configuration only in the fields under study. Seeds and
// output directories stay untouched here; the executor owns them.
struct PresetArm {
    std::string name;
    RunConfig cfg;
};

const std::vector<std::string>& preset_names();

// guidance     timestep-gated control vs always-on guidance at equal strength
// alpha-sweep  gate threshold sweep across the degradation knee
// curves       timestep focus presets for the first distillation pass
// stages       first pass focus and the presence of the refinement pass
// cache        no reuse vs post-hoc reuse vs trained compensation
// blocks       cached window placement at equal width
// mlp          compensation granularity: none, one module, one per block
// kd           compensator distillation terms off vs on
std::vector<PresetArm> ablation_presets(const std::string& preset, const RunConfig& base);

struct AblationRow {
    std::string arm;
    std::uint64_t seed;
    EvalReport report;
};

// Runs every arm for seeds 0..seeds-1 under base.out/<preset>/<arm>/seed<N>,
// training one teacher per seed and sharing it across arms (the arms' teacher
// settings are identical by construction, so this is purely a speedup).
// Appends one row per completed run to base.out/<preset>/summary.csv.
std::vector<AblationRow> run_ablation(const std::string& preset, const RunConfig& base,
                                      std::size_t seeds = 5);

}  // namespace fxdl
