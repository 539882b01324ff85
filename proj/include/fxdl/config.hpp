#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fxdl/common.hpp"

namespace fxdl {

// One experiment, fully specified. Every field has a default; a config file
// only lists deviations. Serialization is canonical (fixed key order), so
// two configs are equal exactly when their serialized texts are.
struct RunConfig {
    std::string run_id;         // empty: derived from the output directory leaf
    std::string world = "ring8";
    std::uint64_t seed = 0;
    std::string out = "out";
    double shift = 3.0;         // noise schedule warp shared by all phases

    struct Model {
        std::size_t blocks = 6;
        std::size_t hidden = 32;
        std::size_t time_features = 16;
    } model;

    struct Teacher {
        std::size_t iters = 4000;
        std::size_t batch = 128;
        double lr = 3e-3;
        double cond_dropout = 0.1;  // 0 disables the null branch and hence guidance
    } teacher;

    struct Guidance {
        double w = 7.0;
        double alpha = 0.94;  // conditional-only above this noise level
    } guidance;

    struct Stage1 {
        std::size_t iters = 1000;
        std::size_t batch = 64;
        std::size_t gen_steps = 2;  // serving schedule length
        std::size_t ttur = 2;       // generator update period
        std::size_t eval_every = 100;
        double lr_gen = 5e-4;
        double lr_fake = 4e-3;
        std::string curve = "c";    // timestep focus preset
    } stage1;

    struct Stage2 {
        bool enabled = true;
        std::size_t iters = 2000;
        std::size_t warmup = 500;
        std::size_t ttur = 3;
        std::size_t batch = 32;
        std::size_t ref_steps = 8;
        std::size_t eval_every = 200;
        std::size_t disc_hidden = 64;
        double lr_gen = 5e-5;
        double lr_phi = 5e-3;
        double lr_disc = 5e-4;
        double kd_feat = 0.0;
        double kd_out = 0.0;
    } stage2;

    struct Cache {
        std::string mode = "none";     // none | naive | dct
        std::string comp = "segment";  // segment | perblock
        std::string segment = "auto";  // auto | [first, last] | [a,b]+[c,d] ...
        std::size_t k = 2;             // window width for automatic selection
        std::size_t min_start = 1;     // earliest block eligible for caching
        std::size_t profile_batch = 64;
        std::string profile_source = "stage1";  // stage1 | teacher
    } cache;

    struct Eval {
        std::size_t per_class = 128;
        std::size_t ref_steps = 28;  // teacher rollout length for reference sets
    } eval;
};

// Parse `key = value` lines with # comments; unknown or duplicate keys are
// errors. Parsing validates value syntax; validate_config checks semantics.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

std::string serialize_config(const RunConfig& cfg);

// Dotted keys whose values differ between the two configs, in canonical order.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

// Semantic checks: known presets, ranges, segment shape. Throws ConfigError.
void validate_config(const RunConfig& cfg);

// "[first, last]" -> pair; used for cache.segment when not "auto".
std::pair<std::size_t, std::size_t> parse_segment_value(const std::string& value);

// "[a, b]+[c, d]" -> ascending disjoint spans; a single span is the common case.
std::vector<std::pair<std::size_t, std::size_t>> parse_segments_value(const std::string& value);

}  // namespace fxdl
