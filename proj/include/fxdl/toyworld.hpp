#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fxdl/rng.hpp"
#include "fxdl/tensor.hpp"

namespace fxdl {

// Conditional isotropic Gaussian mixture over R^dim. Every mode shares one
// sigma; each class label owns a subset of modes. The unconditional variant
// mixes all modes with the global weights.
template <typename T>
struct MixtureSpec {
    std::size_t dim = 0;
    std::size_t classes = 0;
    Tensor<T> centers;  // [K, dim]
    T sigma = T(0.1);
    std::vector<T> weights;                     // global, strictly positive, sums to 1
    std::vector<std::vector<int>> class_modes;  // class -> mode indices

    std::size_t modes() const { return centers.rank() == 2 ? centers.shape[0] : 0; }

    void validate() const {
        require(dim > 0 && classes > 0, "MixtureSpec: empty dims");
        require(centers.rank() == 2 && centers.shape[1] == dim, "MixtureSpec: bad centers");
        require(sigma > T(0), "MixtureSpec: sigma must be positive");
        require(weights.size() == modes(), "MixtureSpec: weight count mismatch");
        T wsum = 0;
        for (T w : weights) {
            require(w > T(0), "MixtureSpec: weights must be positive");
            wsum += w;
        }
        require(std::abs(wsum - T(1)) < T(1e-6), "MixtureSpec: weights must sum to 1");
        require(class_modes.size() == classes, "MixtureSpec: class subsets mismatch");
        for (const auto& subset : class_modes) {
            require(!subset.empty(), "MixtureSpec: empty class subset");
            for (int k : subset)
                require(k >= 0 && static_cast<std::size_t>(k) < modes(),
                        "MixtureSpec: subset index out of range");
        }
    }

    // Modes visible under a condition (all modes when unconditional), with
    // weights renormalized within the subset.
    std::vector<std::pair<int, T>> active_modes(std::optional<int> cond) const {
        std::vector<std::pair<int, T>> out;
        if (cond) {
            require(*cond >= 0 && static_cast<std::size_t>(*cond) < classes,
                    "MixtureSpec: condition out of range");
            T z = 0;
            for (int k : class_modes[*cond]) z += weights[k];
            for (int k : class_modes[*cond]) out.emplace_back(k, weights[k] / z);
        } else {
            for (std::size_t k = 0; k < modes(); ++k)
                out.emplace_back(static_cast<int>(k), weights[k]);
        }
        return out;
    }
};

// ---- presets ----

// 8 modes on a radius-2 ring, classes interleaved (even modes class 0).
template <typename T>
MixtureSpec<T> ring8_world() {
    MixtureSpec<T> w;
    w.dim = 2;
    w.classes = 2;
    w.sigma = T(0.1);
    w.centers = Tensor<T>({8, 2});
    w.class_modes.assign(2, {});
    for (int k = 0; k < 8; ++k) {
        double a = 2.0 * 3.14159265358979323846 * k / 8.0;
        w.centers.at(k, 0) = T(2.0 * std::cos(a));
        w.centers.at(k, 1) = T(2.0 * std::sin(a));
        w.weights.push_back(T(0.125));
        w.class_modes[k % 2].push_back(k);
    }
    w.validate();
    return w;
}

// 8x8 single-channel patterns: smoothed bumps at eight positions on a circle
// in pixel space, unit RMS, classes interleaved. Gives higher-dimensional
// block activations for cache experiments.
template <typename T>
MixtureSpec<T> img8_world() {
    MixtureSpec<T> w;
    w.dim = 64;
    w.classes = 2;
    w.sigma = T(0.1);
    w.centers = Tensor<T>({8, 64});
    w.class_modes.assign(2, {});
    for (int k = 0; k < 8; ++k) {
        double a = 2.0 * 3.14159265358979323846 * k / 8.0;
        double cy = 3.5 + 2.2 * std::sin(a);
        double cx = 3.5 + 2.2 * std::cos(a);
        double ss = 0.0;
        std::vector<double> tpl(64);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
                double val = std::exp(-d2 / (2.0 * 1.2 * 1.2));
                tpl[r * 8 + c] = val;
                ss += val * val;
            }
        double rms = std::sqrt(ss / 64.0);
        for (int j = 0; j < 64; ++j) w.centers.at(k, j) = T(tpl[j] / rms);
        w.weights.push_back(T(0.125));
        w.class_modes[k % 2].push_back(k);
    }
    w.validate();
    return w;
}

template <typename T>
MixtureSpec<T> make_world(const std::string& name) {
    if (name == "ring8") return ring8_world<T>();
    if (name == "img8") return img8_world<T>();
    throw ContractViolation("make_world: unknown preset " + name);
}

// ---- sampling ----

// n draws from the conditional mixture: pick a mode by subset weight, then
// add isotropic noise. Unconditional when cond is empty.
template <typename T>
Tensor<T> sample_world(const MixtureSpec<T>& spec, std::optional<int> cond, std::size_t n,
                       Rng& rng) {
    auto active = spec.active_modes(cond);
    Tensor<T> out({n, spec.dim});
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        T acc = 0;
        int mode = active.back().first;
        for (const auto& [k, wk] : active) {
            acc += wk;
            if (u < static_cast<double>(acc)) {
                mode = k;
                break;
            }
        }
        for (std::size_t j = 0; j < spec.dim; ++j)
            out.at(i, j) = spec.centers.at(static_cast<std::size_t>(mode), j) +
                           spec.sigma * static_cast<T>(rng.normal());
    }
    return out;
}

// ---- closed-form quantities under the forward noising x_t = (1-t) x0 + t e ----
//
// Component k of the noised mixture at time t is
//   N((1-t) mu_k, s2 I),  s2 = (1-t)^2 sigma^2 + t^2.

namespace detail {

// Log responsibilities and shared variance at (x, t); returns log w_k N_k(x)
// up to a common constant, which cancels in the softmax.
template <typename T>
struct NoisedMixture {
    std::vector<double> logit;  // per active mode
    std::vector<int> mode;
    double s2;
};

template <typename T>
NoisedMixture<T> noised_components(const MixtureSpec<T>& spec, std::optional<int> cond,
                                   const T* x, T t) {
    auto active = spec.active_modes(cond);
    double a = 1.0 - static_cast<double>(t);
    double s2 = a * a * static_cast<double>(spec.sigma) * static_cast<double>(spec.sigma) +
                static_cast<double>(t) * static_cast<double>(t);
    NoisedMixture<T> nm;
    nm.s2 = s2;
    for (const auto& [k, wk] : active) {
        double d2 = 0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            double diff = static_cast<double>(x[j]) -
                          a * static_cast<double>(spec.centers.at(static_cast<std::size_t>(k), j));
            d2 += diff * diff;
        }
        nm.logit.push_back(std::log(static_cast<double>(wk)) - d2 / (2.0 * s2));
        nm.mode.push_back(k);
    }
    return nm;
}

inline std::vector<double> softmax_stable(const std::vector<double>& logit) {
    double mx = logit[0];
    for (double l : logit) mx = std::max(mx, l);
    std::vector<double> p(logit.size());
    double z = 0;
    for (std::size_t i = 0; i < logit.size(); ++i) {
        p[i] = std::exp(logit[i] - mx);
        z += p[i];
    }
    for (double& pi : p) pi /= z;
    return p;
}

}  // namespace detail

// Gradient of log p_t(x | cond) for each row of x. Exact for all t in [0,1].
template <typename T>
Tensor<T> analytic_score(const MixtureSpec<T>& spec, std::optional<int> cond,
                         const Tensor<T>& x, T t) {
    require(t >= T(0) && t <= T(1), "analytic_score: t outside [0,1]");
    require(x.cols() == spec.dim, "analytic_score: dim mismatch");
    double a = 1.0 - static_cast<double>(t);
    Tensor<T> out = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto nm = detail::noised_components(spec, cond, &x.v[i * spec.dim], t);
        auto resp = detail::softmax_stable(nm.logit);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            double s = 0;
            for (std::size_t c = 0; c < resp.size(); ++c) {
                double mkj = a * static_cast<double>(
                                     spec.centers.at(static_cast<std::size_t>(nm.mode[c]), j));
                s += resp[c] * (mkj - static_cast<double>(x.at(i, j))) / nm.s2;
            }
            out.at(i, j) = static_cast<T>(s);
        }
    }
    return out;
}

// log p_t(x | cond) up to the dimension constant; exact differences in x, so
// finite differences of this function give the score.
template <typename T>
double analytic_log_density(const MixtureSpec<T>& spec, std::optional<int> cond,
                            const T* x, T t) {
    auto nm = detail::noised_components(spec, cond, x, t);
    double mx = nm.logit[0];
    for (double l : nm.logit) mx = std::max(mx, l);
    double z = 0;
    for (double l : nm.logit) z += std::exp(l - mx);
    double d = static_cast<double>(spec.dim);
    return mx + std::log(z) - 0.5 * d * std::log(2.0 * 3.14159265358979323846 * nm.s2);
}

// Posterior mean E[x0 | x_t, cond]: per-component Gaussian conditioning mixed
// by the responsibilities. The Bayes-optimal clean-sample prediction.
template <typename T>
Tensor<T> posterior_mean_x0(const MixtureSpec<T>& spec, std::optional<int> cond,
                            const Tensor<T>& x, T t) {
    require(t >= T(0) && t <= T(1), "posterior_mean_x0: t outside [0,1]");
    require(x.cols() == spec.dim, "posterior_mean_x0: dim mismatch");
    double a = 1.0 - static_cast<double>(t);
    double sig2 = static_cast<double>(spec.sigma) * static_cast<double>(spec.sigma);
    Tensor<T> out = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto nm = detail::noised_components(spec, cond, &x.v[i * spec.dim], t);
        auto resp = detail::softmax_stable(nm.logit);
        double gain = a * sig2 / nm.s2;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            double s = 0;
            for (std::size_t c = 0; c < resp.size(); ++c) {
                double mu = static_cast<double>(
                    spec.centers.at(static_cast<std::size_t>(nm.mode[c]), j));
                s += resp[c] * (mu + gain * (static_cast<double>(x.at(i, j)) - a * mu));
            }
            out.at(i, j) = static_cast<T>(s);
        }
    }
    return out;
}

}  // namespace fxdl
