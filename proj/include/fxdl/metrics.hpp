#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fxdl/tensor.hpp"
#include "fxdl/toyworld.hpp"

namespace fxdl {

namespace detail {

template <typename T>
double sq_dist_rows(const Tensor<T>& a, std::size_t i, const Tensor<T>& b, std::size_t j) {
    double s = 0;
    std::size_t d = a.cols();
    for (std::size_t c = 0; c < d; ++c) {
        double diff = static_cast<double>(a.v[i * d + c]) - static_cast<double>(b.v[j * d + c]);
        s += diff * diff;
    }
    return s;
}

inline double median_inplace(std::vector<double>& xs) {
    require(!xs.empty(), "median: empty");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

inline double median(std::vector<double> xs) { return detail::median_inplace(xs); }

// Nearest valid mode per sample. A mode counts as covered when at least one
// sample lies within `radius` of its center; hq is the fraction of samples
// within `radius` of any valid mode.
template <typename T>
struct CoverageReport {
    double coverage = 0;       // covered / valid modes
    double hq_fraction = 0;
    std::vector<int> covered;  // valid mode ids that were hit
};

template <typename T>
CoverageReport<T> mode_coverage(const Tensor<T>& samples, const MixtureSpec<T>& spec,
                                std::optional<int> cond, T radius) {
    require(samples.cols() == spec.dim, "mode_coverage: dim mismatch");
    require(radius > T(0), "mode_coverage: radius must be positive");
    auto active = spec.active_modes(cond);
    std::vector<bool> hit(active.size(), false);
    std::size_t good = 0;
    double r2 = static_cast<double>(radius) * static_cast<double>(radius);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        bool near_any = false;
        for (std::size_t m = 0; m < active.size(); ++m) {
            double d2 = detail::sq_dist_rows(samples, i, spec.centers,
                                             static_cast<std::size_t>(active[m].first));
            if (d2 <= r2) {
                hit[m] = true;
                near_any = true;
            }
        }
        if (near_any) ++good;
    }
    CoverageReport<T> rep;
    for (std::size_t m = 0; m < active.size(); ++m)
        if (hit[m]) rep.covered.push_back(active[m].first);
    rep.coverage = static_cast<double>(rep.covered.size()) / static_cast<double>(active.size());
    rep.hq_fraction = samples.rows() ? static_cast<double>(good) /
                                           static_cast<double>(samples.rows())
                                     : 0.0;
    return rep;
}

// Fraction of samples whose nearest mode (over all modes) belongs to the
// conditioning class.
template <typename T>
double condition_accuracy(const Tensor<T>& samples, int cond, const MixtureSpec<T>& spec) {
    require(samples.cols() == spec.dim, "condition_accuracy: dim mismatch");
    require(cond >= 0 && static_cast<std::size_t>(cond) < spec.classes,
            "condition_accuracy: condition out of range");
    if (samples.rows() == 0) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        double best = 0;
        int best_mode = -1;
        for (std::size_t k = 0; k < spec.modes(); ++k) {
            double d2 = detail::sq_dist_rows(samples, i, spec.centers, k);
            if (best_mode < 0 || d2 < best) {
                best = d2;
                best_mode = static_cast<int>(k);
            }
        }
        const auto& subset = spec.class_modes[static_cast<std::size_t>(cond)];
        if (std::find(subset.begin(), subset.end(), best_mode) != subset.end()) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(samples.rows());
}

// Mean pairwise Euclidean distance within each group, averaged over groups.
// Groups are same-condition sample sets drawn from different seeds.
template <typename T>
double pairwise_diversity(const std::vector<Tensor<T>>& groups) {
    require(!groups.empty(), "pairwise_diversity: no groups");
    double total = 0;
    for (const auto& gset : groups) {
        std::size_t g = gset.rows();
        require(g >= 2, "pairwise_diversity: groups need at least two samples");
        double s = 0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = i + 1; j < g; ++j) {
                s += std::sqrt(detail::sq_dist_rows(gset, i, gset, j));
                ++pairs;
            }
        total += s / static_cast<double>(pairs);
    }
    return total / static_cast<double>(groups.size());
}

// Median pairwise distance of a reference set; the default kernel bandwidth.
template <typename T>
double median_pairwise_distance(const Tensor<T>& xs) {
    require(xs.rows() >= 2, "median_pairwise_distance: need at least two samples");
    std::vector<double> d;
    d.reserve(xs.rows() * (xs.rows() - 1) / 2);
    for (std::size_t i = 0; i < xs.rows(); ++i)
        for (std::size_t j = i + 1; j < xs.rows(); ++j)
            d.push_back(std::sqrt(detail::sq_dist_rows(xs, i, xs, j)));
    return detail::median_inplace(d);
}

// Unbiased squared maximum mean discrepancy with a Gaussian kernel
// k(a,b) = exp(-||a-b||^2 / (2 bw^2)). Every sum excludes the diagonal; for
// equal sample counts this is the paired U-statistic, which is exactly zero
// on identical sets and may go slightly negative for same-distribution draws.
template <typename T>
double mmd2(const Tensor<T>& x, const Tensor<T>& y, double bandwidth) {
    require(x.cols() == y.cols(), "mmd2: dim mismatch");
    std::size_t m = x.rows(), n = y.rows();
    require(m >= 2 && n >= 2, "mmd2: need at least two samples per set");
    require(bandwidth > 0, "mmd2: bandwidth must be positive");
    double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    auto kxx = [&](const Tensor<T>& a) {
        std::size_t r = a.rows();
        double s = 0;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = i + 1; j < r; ++j)
                s += std::exp(-detail::sq_dist_rows(a, i, a, j) * inv);
        return 2.0 * s / (static_cast<double>(r) * static_cast<double>(r - 1));
    };
    double term_x = kxx(x), term_y = kxx(y);
    double cross = 0;
    if (m == n) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) cross += std::exp(-detail::sq_dist_rows(x, i, y, j) * inv);
        cross *= 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                cross += std::exp(-detail::sq_dist_rows(x, i, y, j) * inv);
        cross *= 2.0 / (static_cast<double>(m) * static_cast<double>(n));
    }
    return term_x + term_y - cross;
}

// One evaluation row: aggregate quality/diversity metrics for a generator.
struct EvalReport {
    double mode_coverage = 0;   // covered modes / all modes, pooled over conditions
    double hq_fraction = 0;
    double diversity = 0;
    double mmd2 = 0;
    double condition_accuracy = 0;
};

}  // namespace fxdl
