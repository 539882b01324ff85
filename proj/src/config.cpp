#include "fxdl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fxdl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a nonnegative integer, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true") return true;
    if (v == "off" || v == "false") return false;
    throw ConfigError("config: " + key + " expects on/off, got '" + v + "'");
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Entry>& table() {
    static const std::vector<Entry> t = [] {
        std::vector<Entry> e;
        auto str = [&](const char* k, std::string RunConfig::* f) {
            e.push_back({k, [f](const RunConfig& c) { return c.*f; },
                         [f](RunConfig& c, const std::string& v) { c.*f = v; }});
        };
        auto add = [&](const char* k, auto getter, auto setter) {
            e.push_back({k, getter, setter});
        };
        str("run_id", &RunConfig::run_id);
        str("world", &RunConfig::world);
        add("seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); });
        str("out", &RunConfig::out);
        add("shift", [](const RunConfig& c) { return num(c.shift); },
            [](RunConfig& c, const std::string& v) { c.shift = to_double("shift", v); });

#define SIZE_FIELD(key, ref)                                                        \
    add(key, [](const RunConfig& c) { return std::to_string(c.ref); },              \
        [](RunConfig& c, const std::string& v) { c.ref = to_size(key, v); })
#define REAL_FIELD(key, ref)                                                        \
    add(key, [](const RunConfig& c) { return num(c.ref); },                         \
        [](RunConfig& c, const std::string& v) { c.ref = to_double(key, v); })
#define TEXT_FIELD(key, ref)                                                        \
    add(key, [](const RunConfig& c) { return c.ref; },                              \
        [](RunConfig& c, const std::string& v) { c.ref = v; })
#define BOOL_FIELD(key, ref)                                                        \
    add(key, [](const RunConfig& c) { return c.ref ? std::string("on") : "off"; },  \
        [](RunConfig& c, const std::string& v) { c.ref = to_bool(key, v); })

        SIZE_FIELD("model.blocks", model.blocks);
        SIZE_FIELD("model.hidden", model.hidden);
        SIZE_FIELD("model.time_features", model.time_features);

        SIZE_FIELD("teacher.iters", teacher.iters);
        SIZE_FIELD("teacher.batch", teacher.batch);
        REAL_FIELD("teacher.lr", teacher.lr);
        REAL_FIELD("teacher.cond_dropout", teacher.cond_dropout);

        REAL_FIELD("guidance.w", guidance.w);
        REAL_FIELD("guidance.alpha", guidance.alpha);

        SIZE_FIELD("stage1.iters", stage1.iters);
        SIZE_FIELD("stage1.batch", stage1.batch);
        SIZE_FIELD("stage1.gen_steps", stage1.gen_steps);
        SIZE_FIELD("stage1.ttur", stage1.ttur);
        SIZE_FIELD("stage1.eval_every", stage1.eval_every);
        REAL_FIELD("stage1.lr_gen", stage1.lr_gen);
        REAL_FIELD("stage1.lr_fake", stage1.lr_fake);
        TEXT_FIELD("stage1.curve", stage1.curve);

        BOOL_FIELD("stage2.enabled", stage2.enabled);
        SIZE_FIELD("stage2.iters", stage2.iters);
        SIZE_FIELD("stage2.warmup", stage2.warmup);
        SIZE_FIELD("stage2.ttur", stage2.ttur);
        SIZE_FIELD("stage2.batch", stage2.batch);
        SIZE_FIELD("stage2.ref_steps", stage2.ref_steps);
        SIZE_FIELD("stage2.eval_every", stage2.eval_every);
        SIZE_FIELD("stage2.disc_hidden", stage2.disc_hidden);
        REAL_FIELD("stage2.lr_gen", stage2.lr_gen);
        REAL_FIELD("stage2.lr_phi", stage2.lr_phi);
        REAL_FIELD("stage2.lr_disc", stage2.lr_disc);
        REAL_FIELD("stage2.kd_feat", stage2.kd_feat);
        REAL_FIELD("stage2.kd_out", stage2.kd_out);

        TEXT_FIELD("cache.mode", cache.mode);
        TEXT_FIELD("cache.comp", cache.comp);
        TEXT_FIELD("cache.segment", cache.segment);
        SIZE_FIELD("cache.k", cache.k);
        SIZE_FIELD("cache.min_start", cache.min_start);
        SIZE_FIELD("cache.profile_batch", cache.profile_batch);
        TEXT_FIELD("cache.profile_source", cache.profile_source);

        SIZE_FIELD("eval.per_class", eval.per_class);
        SIZE_FIELD("eval.ref_steps", eval.ref_steps);

#undef SIZE_FIELD
#undef REAL_FIELD
#undef TEXT_FIELD
#undef BOOL_FIELD
        return e;
    }();
    return t;
}

const Entry* find_entry(const std::string& key) {
    for (const auto& e : table())
        if (e.key == key) return &e;
    return nullptr;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        const Entry* entry = find_entry(key);
        if (!entry)
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                              key + "'");
        if (!seen.insert(key).second)
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        entry->set(cfg, value);
    }
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& e : table()) {
        out += e.key;
        out += " = ";
        out += e.get(cfg);
        out += "\n";
    }
    return out;
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
    std::vector<std::string> keys;
    for (const auto& e : table())
        if (e.get(a) != e.get(b)) keys.push_back(e.key);
    return keys;
}

std::pair<std::size_t, std::size_t> parse_segment_value(const std::string& value) {
    std::string v = trim(value);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        throw ConfigError("config: segment expects [first, last], got '" + value + "'");
    v = v.substr(1, v.size() - 2);
    std::size_t comma = v.find(',');
    if (comma == std::string::npos)
        throw ConfigError("config: segment expects two entries, got '" + value + "'");
    std::size_t first = to_size("cache.segment", trim(v.substr(0, comma)));
    std::size_t last = to_size("cache.segment", trim(v.substr(comma + 1)));
    if (last < first)
        throw ConfigError("config: segment last precedes first in '" + value + "'");
    return {first, last};
}

std::vector<std::pair<std::size_t, std::size_t>> parse_segments_value(const std::string& value) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::string rest = trim(value);
    while (true) {
        std::size_t plus = rest.find('+');
        spans.push_back(parse_segment_value(
            plus == std::string::npos ? rest : trim(rest.substr(0, plus))));
        if (plus == std::string::npos) break;
        rest = trim(rest.substr(plus + 1));
    }
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first <= spans[i - 1].second)
            throw ConfigError("config: cached spans must be disjoint and ascending in '" +
                              value + "'");
    return spans;
}

void validate_config(const RunConfig& cfg) {
    auto one_of = [](const std::string& key, const std::string& v,
                     std::initializer_list<const char*> allowed) {
        for (const char* a : allowed)
            if (v == a) return;
        std::string msg = "config: " + key + " must be one of {";
        bool first = true;
        for (const char* a : allowed) {
            msg += (first ? "" : ", ");
            msg += a;
            first = false;
        }
        throw ConfigError(msg + "}, got '" + v + "'");
    };
    one_of("world", cfg.world, {"ring8", "img8"});
    one_of("stage1.curve", cfg.stage1.curve, {"uniform", "a", "b", "c", "d"});
    one_of("cache.mode", cfg.cache.mode, {"none", "naive", "dct"});
    one_of("cache.comp", cfg.cache.comp, {"segment", "perblock"});
    one_of("cache.profile_source", cfg.cache.profile_source, {"stage1", "teacher"});

    if (cfg.model.blocks < 2) throw ConfigError("config: model.blocks must be at least 2");
    if (cfg.guidance.w < 1.0) throw ConfigError("config: guidance.w must be at least 1");
    if (cfg.guidance.alpha <= 0.0 || cfg.guidance.alpha > 1.0)
        throw ConfigError("config: guidance.alpha must lie in (0, 1]");
    if (cfg.teacher.cond_dropout < 0.0 || cfg.teacher.cond_dropout >= 1.0)
        throw ConfigError("config: teacher.cond_dropout must lie in [0, 1)");
    if (cfg.shift <= 0.0) throw ConfigError("config: shift must be positive");
    if (cfg.stage1.gen_steps < 1) throw ConfigError("config: stage1.gen_steps must be positive");
    if (cfg.stage1.ttur < 1 || cfg.stage2.ttur < 1)
        throw ConfigError("config: update periods must be positive");
    if (cfg.stage2.ref_steps < 2)
        throw ConfigError("config: stage2.ref_steps must be at least 2");
    if (cfg.eval.per_class < 4)
        throw ConfigError("config: eval.per_class must be at least 4");

    std::size_t span_count = 1;
    if (cfg.cache.segment != "auto") {
        auto spans = parse_segments_value(cfg.cache.segment);
        if (spans.back().second >= cfg.model.blocks)
            throw ConfigError("config: cache segment exceeds the block stack");
        span_count = spans.size();
    } else {
        if (cfg.cache.k < 1 || cfg.cache.k >= cfg.model.blocks)
            throw ConfigError("config: cache.k must lie in [1, blocks)");
        if (cfg.cache.min_start + cfg.cache.k > cfg.model.blocks)
            throw ConfigError("config: cache.min_start leaves no admissible window");
    }

    if (cfg.stage2.kd_feat < 0.0 || cfg.stage2.kd_out < 0.0)
        throw ConfigError("config: distillation weights must be nonnegative");
    if (cfg.stage2.kd_feat > 0.0 || cfg.stage2.kd_out > 0.0) {
        if (cfg.cache.mode != "dct")
            throw ConfigError("config: distillation terms require cache.mode = dct");
        if (cfg.cache.comp != "segment" || span_count != 1)
            throw ConfigError(
                "config: distillation terms require a single segment-level module");
    }
}

}  // namespace fxdl
