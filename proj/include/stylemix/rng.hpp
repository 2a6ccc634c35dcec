// Copyright 2026 The stylemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <vector>

#include "stylemix/error.hpp"

namespace stylemix {

// SplitMix64 finalizer, used both to whiten raw seeds and to derive
// independent substream seeds from (seed, tag...) paths.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = 0x243f6a8885a308d3ULL; // pi fraction, arbitrary start
    for (std::uint64_t v : path) s = splitmix64(s ^ v);
    return s;
}

/// Deterministic random stream. All transformations are hand-rolled on top
/// of mt19937_64 so that draws are bit-identical across standard libraries
/// and platforms; std::*_distribution is never used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    std::uint64_t raw() { return eng_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ValueError("uniform_int: n must be positive");
        if (n == 1) return 0;
        // Reject raw values >= largest multiple of n representable in 64 bits.
        const std::uint64_t mod = (UINT64_MAX % n + 1) % n; // 2^64 mod n
        std::uint64_t x = eng_();
        if (mod != 0) {
            const std::uint64_t lim = 0 - mod; // 2^64 - mod
            while (x >= lim) x = eng_();
        }
        return x % n;
    }

    /// Standard normal via Box-Muller (cosine branch). Two draws per call.
    double gaussian() {
        const double u1 = 1.0 - uniform01(); // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
    double gamma(double shape) {
        if (shape <= 0.0) throw ValueError("gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            const double u = 1.0 - uniform01(); // avoid log(0)
            return g * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Beta(a, b). Johnk's rejection method when both shapes are <= 1
    /// (the usual MixStyle regime, alpha = 0.1), Gamma-ratio otherwise.
    double beta(double a, double b) {
        if (a <= 0.0 || b <= 0.0) throw ValueError("beta: shapes must be positive");
        if (a <= 1.0 && b <= 1.0) {
            for (;;) {
                const double u = uniform01();
                const double v = uniform01();
                const double x = std::pow(u, 1.0 / a);
                const double y = std::pow(v, 1.0 / b);
                if (x + y <= 1.0) {
                    if (x + y > 0.0) return x / (x + y);
                    // Both powers underflowed; redo the ratio in log space.
                    double log_x = std::log(u) / a;
                    double log_y = std::log(v) / b;
                    const double m = std::max(log_x, log_y);
                    log_x -= m;
                    log_y -= m;
                    return std::exp(log_x - std::log(std::exp(log_x) + std::exp(log_y)));
                }
            }
        }
        const double ga = gamma(a);
        const double gb = gamma(b);
        return ga / (ga + gb);
    }

    /// Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<int> permutation(int n) {
        if (n < 0) throw ValueError("permutation: n must be non-negative");
        std::vector<int> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), 0);
        for (int i = n - 1; i >= 1; --i) {
            const int j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
        }
        return p;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace stylemix
