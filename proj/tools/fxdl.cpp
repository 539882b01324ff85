#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "fxdl/cache.hpp"
#include "fxdl/csv.hpp"
#include "fxdl/presets.hpp"
#include "fxdl/runner.hpp"

using namespace fxdl;

namespace {

std::string report_line(const EvalReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "coverage=%.3f hq=%.3f diversity=%.4f mmd2=%.5f cond_acc=%.3f",
                  r.mode_coverage, r.hq_fraction, r.diversity, r.mmd2,
                  r.condition_accuracy);
    return buf;
}

// Numeric blowups leave a post-mortem next to the artifacts they interrupted.
void write_dump(const RunConfig& cfg, const std::string& what) {
    std::ofstream out(run_paths(cfg).dir / "dump.txt", std::ios::trunc);
    out << "numeric failure\n" << what << "\n\n" << serialize_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage diffusion distillation laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    bool retrain = false;
    int stage = 0;
    std::size_t steps = 2, per_class = 128, seeds = 5;
    std::string preset;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file")
            ->required()
            ->check(CLI::ExistingFile);
    };

    CLI::App* teach = app.add_subcommand("train-teacher", "fit the guided teacher");
    add_config(teach);
    teach->add_flag("--retrain", retrain, "train even when a checkpoint exists");

    CLI::App* distill = app.add_subcommand("distill", "run a distillation stage");
    add_config(distill);
    distill->add_option("--stage", stage, "1: focused distillation, 2: adversarial refinement")
        ->required()
        ->check(CLI::Range(1, 2));

    CLI::App* profile = app.add_subcommand("profile-cache", "measure per-block reuse error");
    add_config(profile);

    CLI::App* sample = app.add_subcommand("sample", "generate and score samples");
    add_config(sample);
    sample->add_option("--steps", steps, "serving schedule length");
    sample->add_option("--n", per_class, "samples per condition");

    CLI::App* evalc = app.add_subcommand("eval", "score the current best checkpoint");
    add_config(evalc);

    CLI::App* ablate = app.add_subcommand("ablate", "run a preset ablation study");
    add_config(ablate);
    ablate->add_option("--preset", preset, "study name")
        ->required()
        ->check(CLI::IsMember(preset_names()));
    ablate->add_option("--seeds", seeds, "number of seeds, numbered from 0");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunConfig cfg;
    try {
        cfg = parse_config_file(config_path);
        if (const char* env = std::getenv("FXDL_OUT")) cfg.out = env;
        validate_config(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fxdl: %s\n", e.what());
        return 2;
    }

    try {
        if (teach->parsed()) {
            double loss = run_train_teacher(cfg, retrain);
            if (loss > 0)
                std::printf("teacher trained: tail loss %.4f -> %s\n", loss,
                            cfg.out.c_str());
            else
                std::printf("teacher checkpoint already present -> %s\n", cfg.out.c_str());
        } else if (distill->parsed()) {
            EvalReport rep = stage == 1 ? run_distill_stage1(cfg) : run_distill_stage2(cfg);
            std::printf("stage %d done: %s -> %s\n", stage, report_line(rep).c_str(),
                        cfg.out.c_str());
        } else if (profile->parsed()) {
            auto prof = run_profile_cache(cfg);
            std::string es;
            for (std::size_t k = 0; k < prof.e.size(); ++k)
                es += (k ? " " : "") + csv_num(static_cast<double>(prof.e[k]));
            if (cfg.cache.segment == "auto") {
                SegmentSpec win = select_segment(prof, cfg.cache.k, cfg.cache.min_start);
                std::printf("reuse error per block: %s; window [%zu, %zu]\n", es.c_str(),
                            win.first, win.last);
            } else {
                std::printf("reuse error per block: %s; spans %s\n", es.c_str(),
                            cfg.cache.segment.c_str());
            }
        } else if (sample->parsed()) {
            EvalReport rep = run_sample(cfg, steps, per_class);
            std::printf("sampled %zu per condition at %zu steps: %s\n", per_class, steps,
                        report_line(rep).c_str());
        } else if (evalc->parsed()) {
            EvalReport rep = run_eval(cfg);
            std::printf("eval: %s\n", report_line(rep).c_str());
        } else if (ablate->parsed()) {
            auto rows = run_ablation(preset, cfg, seeds);
            std::printf("ablation '%s': %zu runs -> %s/%s/summary.csv\n", preset.c_str(),
                        rows.size(), cfg.out.c_str(), preset.c_str());
        }
    } catch (const NumericFailure& e) {
        write_dump(cfg, e.what());
        std::fprintf(stderr, "fxdl: numeric failure: %s (see dump.txt)\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fxdl: %s\n", e.what());
        return 2;
    }
    return 0;
}
