#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fxdl/tensor.hpp"

namespace fxdl {

// Ordered collection of named parameter tensors. Order is insertion order and
// defines the optimizer/serialization layout; names are unique.
template <typename T>
class ParamSet {
public:
    std::size_t add(std::string name, Tensor<T> t) {
        require(!index_.count(name), "ParamSet::add: duplicate name " + name);
        index_.emplace(name, entries_.size());
        entries_.push_back({std::move(name), std::move(t)});
        return entries_.size() - 1;
    }

    std::size_t size() const { return entries_.size(); }

    Tensor<T>& operator[](std::size_t i) { return entries_[i].tensor; }
    const Tensor<T>& operator[](std::size_t i) const { return entries_[i].tensor; }

    const std::string& name(std::size_t i) const { return entries_[i].name; }

    std::optional<std::size_t> find(std::string_view n) const {
        auto it = index_.find(std::string(n));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    Tensor<T>& at(std::string_view n) {
        auto i = find(n);
        require(i.has_value(), "ParamSet::at: no parameter named " + std::string(n));
        return entries_[*i].tensor;
    }
    const Tensor<T>& at(std::string_view n) const {
        auto i = find(n);
        require(i.has_value(), "ParamSet::at: no parameter named " + std::string(n));
        return entries_[*i].tensor;
    }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    bool same_structure(const ParamSet& o) const {
        if (size() != o.size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (entries_[i].name != o.entries_[i].name ||
                entries_[i].tensor.shape != o.entries_[i].tensor.shape)
                return false;
        return true;
    }

    static ParamSet zeros_like(const ParamSet& o) {
        ParamSet z;
        for (std::size_t i = 0; i < o.size(); ++i)
            z.add(o.name(i), Tensor<T>(o[i].shape));
        return z;
    }

private:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
bool bitwise_equal(const ParamSet<T>& a, const ParamSet<T>& b) {
    if (!a.same_structure(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bitwise_equal(a[i], b[i])) return false;
    return true;
}

}  // namespace fxdl
