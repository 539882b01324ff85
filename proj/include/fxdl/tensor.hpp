#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "fxdl/common.hpp"

namespace fxdl {

// Dense row-major tensor. Rank 1 and rank 2 cover everything this project
// needs; shape is kept as a vector so checkpoints stay general.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
        : shape(std::move(s)), v(numel_of(shape), fill) {}

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    static Tensor scalar(T x) {
        Tensor t({1});
        t.v[0] = x;
        return t;
    }
    static Tensor row(std::initializer_list<T> xs) {
        Tensor t({xs.size()});
        std::size_t i = 0;
        for (T x : xs) t.v[i++] = x;
        return t;
    }
    static Tensor matrix(std::size_t r, std::size_t c, std::initializer_list<T> xs) {
        require(xs.size() == r * c, "Tensor::matrix: element count mismatch");
        Tensor t({r, c});
        std::size_t i = 0;
        for (T x : xs) t.v[i++] = x;
        return t;
    }

    std::size_t numel() const { return v.size(); }
    std::size_t rank() const { return shape.size(); }
    // Last-dimension length; rank-0/empty tensors are not used.
    std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    T& at(std::size_t i) { return v[i]; }
    T at(std::size_t i) const { return v[i]; }
    T& at(std::size_t i, std::size_t j) { return v[i * cols() + j]; }
    T at(std::size_t i, std::size_t j) const { return v[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape);
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    T m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        // memcmp semantics per element (distinguishes -0.0 from +0.0).
        if (std::memcmp(&a.v[i], &b.v[i], sizeof(T)) != 0) return false;
    }
    return true;
}

}  // namespace fxdl
