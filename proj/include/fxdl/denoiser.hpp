#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fxdl/diffusion.hpp"
#include "fxdl/graph.hpp"
#include "fxdl/param_set.hpp"
#include "fxdl/rng.hpp"

namespace fxdl {

// Inclusive block range [first, last].
struct SegmentSpec {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t length() const { return last - first + 1; }
    void validate(std::size_t blocks) const {
        require(first <= last && last < blocks,
                "SegmentSpec: [" + std::to_string(first) + "," + std::to_string(last) +
                    "] out of range for " + std::to_string(blocks) + " blocks");
    }
};

// Stream values recorded around a segment during one forward pass.
template <typename T>
struct TapRecord {
    SegmentSpec segment;
    Tensor<T> seg_in;   // stream entering block `first`
    Tensor<T> seg_out;  // stream leaving block `last`
    Tensor<T> delta;    // seg_out - seg_in
};

template <typename T>
struct TapVars {
    SegmentSpec segment;
    Var seg_in, seg_out, delta;
};

struct DenoiserConfig {
    std::size_t data_dim = 2;
    std::size_t hidden_dim = 32;  // residual stream width d
    std::size_t blocks = 8;       // B
    std::size_t classes = 2;
    std::size_t time_features = 16;

    void validate() const {
        require(data_dim >= 1 && hidden_dim >= 4 && blocks >= 1 && classes >= 1,
                "DenoiserConfig: degenerate sizes");
        require(time_features >= 2 && time_features % 2 == 0,
                "DenoiserConfig: time_features must be even");
    }
};

// Residual block stack predicting the flow velocity.
//
//   h_0 = embed(x) + time_emb(t) + cond_emb(c)
//   h_{k+1} = h_k + W2_k gelu(W1_k layer_norm(h_k) + b1_k) + b2_k
//   v = head(h_B)
//
// Conditioning is additive in the stream; the last embedding row is the
// null condition used for unconditional prediction. Block MLPs expand 4x.
// Block output weights and the head start at zero, so a fresh model is the
// exact zero velocity field and blocks begin as identities.
template <typename T>
class BlockStackModel {
public:
    BlockStackModel(const DenoiserConfig& cfg, Rng rng) : cfg_(cfg) {
        cfg.validate();
        std::size_t d = cfg.hidden_dim, hidden = 4 * d;
        embed_w_ = add_normal("embed.w", {cfg.data_dim, d}, rng, lecun(cfg.data_dim));
        embed_b_ = params_.add("embed.b", Tensor<T>({d}));
        time_w_ = add_normal("time.w", {cfg.time_features, d}, rng, lecun(cfg.time_features));
        time_b_ = params_.add("time.b", Tensor<T>({d}));
        cond_emb_ = add_normal("cond.emb", {cfg.classes + 1, d}, rng, lecun(d));
        for (std::size_t k = 0; k < cfg.blocks; ++k) {
            std::string p = "block" + std::to_string(k);
            blk_w1_.push_back(add_normal(p + ".w1", {d, hidden}, rng, lecun(d)));
            blk_b1_.push_back(params_.add(p + ".b1", Tensor<T>({hidden})));
            blk_w2_.push_back(params_.add(p + ".w2", Tensor<T>({hidden, d})));
            blk_b2_.push_back(params_.add(p + ".b2", Tensor<T>({d})));
        }
        head_w_ = params_.add("head.w", Tensor<T>({d, cfg.data_dim}));
        head_b_ = params_.add("head.b", Tensor<T>({cfg.data_dim}));
    }

    const DenoiserConfig& config() const { return cfg_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    // Adopt weights from a structurally identical set (checkpoint load).
    void assign(const ParamSet<T>& src) {
        require(params_.same_structure(src), "BlockStackModel::assign: structure mismatch");
        for (std::size_t i = 0; i < src.size(); ++i) params_[i] = src[i];
    }

    // Fill every tensor (including normally-zero ones) with scaled noise;
    // test helper for exercising non-degenerate random stacks.
    void randomize(Rng& rng, T gain = T(1)) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = params_[i];
            std::size_t fan = p.rank() == 2 ? p.shape[0] : p.numel();
            T s = gain * lecun(fan);
            for (auto& x : p.v) x = s * static_cast<T>(rng.normal());
        }
    }

    struct ForwardOut {
        Var v;
        std::vector<TapVars<T>> taps;
    };

    // One injected replacement for a skipped segment: the stream jumps from
    // seg_in to seg_in + delta with blocks [first,last] never evaluated.
    struct Injection {
        SegmentSpec segment;
        Var delta;
    };

    // Shared walker for all forward modes. `record` taps segments, `skip`
    // injects deltas, `stream_trace` captures h_0..h_B values.
    ForwardOut forward(Graph<T>& g, Var x, T t, std::optional<int> cond,
                       const std::vector<SegmentSpec>& record = {},
                       const std::vector<Injection>& skip = {},
                       std::vector<Tensor<T>>* stream_trace = nullptr) const {
        check_plan(record, skip);
        const std::size_t n = g.val(x).rows();
        require(g.val(x).cols() == cfg_.data_dim, "forward: data dim mismatch");
        std::size_t cond_row = cfg_.classes;  // null condition
        if (cond) {
            require(*cond >= 0 && static_cast<std::size_t>(*cond) < cfg_.classes,
                    "forward: condition out of range");
            cond_row = static_cast<std::size_t>(*cond);
        }

        Var h = g.affine(x, g.param(&params_[embed_w_]), g.param(&params_[embed_b_]));
        Var tfeat = g.constant(time_feature_row(t, n));
        Var temb = g.affine(tfeat, g.param(&params_[time_w_]), g.param(&params_[time_b_]));
        h = g.add(h, g.take_row(temb, 0));
        h = g.add(h, g.take_row(g.param(&params_[cond_emb_]), cond_row));

        ForwardOut out;
        if (stream_trace) stream_trace->push_back(g.val(h));
        std::vector<std::optional<Var>> seg_in(record.size());
        for (std::size_t k = 0; k < cfg_.blocks;) {
            for (std::size_t r = 0; r < record.size(); ++r)
                if (record[r].first == k) seg_in[r] = h;
            const Injection* inj = nullptr;
            for (const auto& s : skip)
                if (s.segment.first == k) inj = &s;
            if (inj) {
                h = g.add(h, inj->delta);
                for (std::size_t jump = inj->segment.first; jump <= inj->segment.last; ++jump)
                    if (stream_trace) stream_trace->push_back(g.val(h));
                k = inj->segment.last + 1;
            } else {
                Var u = g.layer_norm(h);
                u = g.affine(u, g.param(&params_[blk_w1_[k]]), g.param(&params_[blk_b1_[k]]));
                u = g.gelu(u);
                u = g.affine(u, g.param(&params_[blk_w2_[k]]), g.param(&params_[blk_b2_[k]]));
                h = g.add(h, u);
                if (stream_trace) stream_trace->push_back(g.val(h));
                ++k;
            }
            for (std::size_t r = 0; r < record.size(); ++r)
                if (record[r].last + 1 == k && seg_in[r]) {
                    Var d = g.sub(h, *seg_in[r]);
                    out.taps.push_back({record[r], *seg_in[r], h, d});
                }
        }
        out.v = g.affine(h, g.param(&params_[head_w_]), g.param(&params_[head_b_]));
        return out;
    }

    // Plain full-mode evaluation without gradient tracking.
    Tensor<T> velocity(const Tensor<T>& x, T t, std::optional<int> cond) const {
        Graph<T> g(false);
        return g.val(forward(g, g.constant(x), t, cond).v);
    }

    // Full-mode evaluation recording all segment taps, value-only.
    std::vector<TapRecord<T>> record_taps(const Tensor<T>& x, T t, std::optional<int> cond,
                                          const std::vector<SegmentSpec>& segments) const {
        Graph<T> g(false);
        auto out = forward(g, g.constant(x), t, cond, segments);
        std::vector<TapRecord<T>> recs;
        for (const auto& tap : out.taps)
            recs.push_back({tap.segment, g.val(tap.seg_in), g.val(tap.seg_out), g.val(tap.delta)});
        return recs;
    }

    VelocityFn<T> velocity_fn() const {
        return [this](const Tensor<T>& x, T t, const std::optional<int>& c) {
            return velocity(x, t, c);
        };
    }

private:
    static T lecun(std::size_t fan_in) {
        return static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    }

    std::size_t add_normal(std::string name, std::vector<std::size_t> shape, Rng& rng, T std_) {
        Tensor<T> t(std::move(shape));
        for (auto& x : t.v) x = std_ * static_cast<T>(rng.normal());
        return params_.add(std::move(name), std::move(t));
    }

    // Sinusoidal features of t at geometric frequencies, one row (broadcast
    // later); n unused but kept for shape clarity at call sites.
    Tensor<T> time_feature_row(T t, std::size_t) const {
        std::size_t half = cfg_.time_features / 2;
        Tensor<T> f({1, cfg_.time_features});
        for (std::size_t j = 0; j < half; ++j) {
            double w = std::exp(std::log(100.0) * static_cast<double>(j) /
                                static_cast<double>(half > 1 ? half - 1 : 1));
            f.v[j] = static_cast<T>(std::sin(w * static_cast<double>(t)));
            f.v[half + j] = static_cast<T>(std::cos(w * static_cast<double>(t)));
        }
        return f;
    }

    void check_plan(const std::vector<SegmentSpec>& record,
                    const std::vector<Injection>& skip) const {
        for (const auto& s : record) s.validate(cfg_.blocks);
        std::size_t prev_end = 0;
        bool first = true;
        for (const auto& s : skip) {
            s.segment.validate(cfg_.blocks);
            require(first || s.segment.first > prev_end,
                    "forward: skip segments must be sorted and disjoint");
            prev_end = s.segment.last;
            first = false;
        }
    }

    DenoiserConfig cfg_;
    ParamSet<T> params_;
    std::size_t embed_w_ = 0, embed_b_ = 0, time_w_ = 0, time_b_ = 0, cond_emb_ = 0;
    std::vector<std::size_t> blk_w1_, blk_b1_, blk_w2_, blk_b2_;
    std::size_t head_w_ = 0, head_b_ = 0;
};

// Deep copy; the clone owns independent storage.
template <typename T>
BlockStackModel<T> copy_weights(const BlockStackModel<T>& src) {
    return src;
}

}  // namespace fxdl
