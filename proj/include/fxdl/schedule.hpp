#pragma once

#include <vector>

#include "fxdl/common.hpp"

namespace fxdl {

// Warp a uniform position u in [0,1] toward high noise levels:
//   t = s*u / (1 + (s-1)*u).
// Monotone bijection of [0,1] with fixed endpoints; s=1 is the identity.
template <typename T>
T shift_time(T u, T s) {
    require(u >= T(0) && u <= T(1), "shift_time: u outside [0,1]");
    require(s > T(0), "shift_time: shift must be positive");
    return s * u / (T(1) + (s - T(1)) * u);
}

template <typename T>
T unshift_time(T t, T s) {
    require(t >= T(0) && t <= T(1), "unshift_time: t outside [0,1]");
    require(s > T(0), "unshift_time: shift must be positive");
    return t / (s - (s - T(1)) * t);
}

// Strictly decreasing noise levels, starting at exactly 1 (pure noise) and
// staying inside (0,1]. The sampler walks these levels with Euler steps and
// finishes with a jump to t=0.
template <typename T>
struct Schedule {
    std::vector<T> t;

    std::size_t steps() const { return t.size(); }

    void validate() const {
        require(!t.empty(), "Schedule: empty");
        require(t.front() == T(1), "Schedule: first entry must be exactly 1");
        for (std::size_t i = 0; i < t.size(); ++i) {
            require(t[i] > T(0) && t[i] <= T(1), "Schedule: entries must lie in (0,1]");
            if (i) require(t[i] < t[i - 1], "Schedule: entries must strictly decrease");
        }
    }

    static Schedule from_list(std::vector<T> values) {
        Schedule s{std::move(values)};
        s.validate();
        return s;
    }

    // k uniform positions u_i = 1 - i/k, warped by the shift. k=4, s=3 gives
    // {1, 0.9, 0.75, 0.5}; k=2, s=3 gives {1, 0.75}.
    static Schedule uniform(std::size_t k, T shift) {
        require(k >= 1, "Schedule::uniform: need at least one step");
        Schedule s;
        for (std::size_t i = 0; i < k; ++i) {
            T u = (T(1) * static_cast<T>(k - i)) / static_cast<T>(k);
            s.t.push_back(shift_time(u, shift));
        }
        s.validate();
        return s;
    }
};

}  // namespace fxdl
