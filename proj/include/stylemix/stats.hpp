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
#include <utility>
#include <vector>

#include "stylemix/tensor.hpp"

namespace stylemix {

constexpr double kDefaultEps = 1e-6;

/// Per-(instance, channel) style statistics. sigma is floored inside the
/// square root: sigma = sqrt(var + eps), so sigma >= sqrt(eps) > 0 always.
/// Computed over spatial dims only; instances never couple across the batch.
struct InstanceStats {
    Tensor4 mu;    // (B,C,1,1)
    Tensor4 sigma; // (B,C,1,1)
    double eps = kDefaultEps;
};

inline InstanceStats compute_stats(const Tensor4& x, double eps = kDefaultEps) {
    if (eps <= 0.0) throw ValueError("compute_stats: eps must be positive");
    if (!x.all_finite()) throw ValueError("compute_stats: non-finite input");
    auto [mean, var] = reduce_spatial_moments(x);
    Tensor4 sigma(var.shape());
    const std::int64_t n = var.size();
    for (std::int64_t i = 0; i < n; ++i) sigma[i] = std::sqrt(var[i] + eps);
    return {std::move(mean), std::move(sigma), eps};
}

/// Per-channel affine parameters of instance normalization.
struct AffineParams {
    std::vector<double> gamma; // length C
    std::vector<double> beta;  // length C
};

namespace detail {

// All statistic transforms are applied in fused scale/shift form,
// out = x * s + t per (instance, channel), so that the degenerate cases
// (gamma = sigma, self-AdaIN, lambda = 1 mixing) reduce to s = 1, t = 0
// and reproduce the input bit for bit.
inline Tensor4 scale_shift(const Tensor4& x, const Tensor4& s, const Tensor4& t) {
    Tensor4 out = elementwise(EwKind::mul, x, s);
    return elementwise(EwKind::add, out, t);
}

} // namespace detail

/// IN: gamma * (x - mu(x)) / sigma(x) + beta, statistics per (instance, channel).
inline Tensor4 instance_normalize(const Tensor4& x, const AffineParams& params,
                                  double eps = kDefaultEps) {
    if (static_cast<int>(params.gamma.size()) != x.c() ||
        static_cast<int>(params.beta.size()) != x.c())
        throw ShapeError("instance_normalize: affine parameter length " +
                         std::to_string(params.gamma.size()) + " vs input " +
                         x.shape().str());
    const InstanceStats st = compute_stats(x, eps);
    Tensor4 s(x.b(), x.c(), 1, 1);
    Tensor4 t(x.b(), x.c(), 1, 1);
    for (int b = 0; b < x.b(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const std::int64_t p = static_cast<std::int64_t>(b) * x.c() + c;
            s[p] = params.gamma[c] / st.sigma[p];
            t[p] = params.beta[c] - st.mu[p] * s[p];
        }
    return detail::scale_shift(x, s, t);
}

/// AdaIN: sigma(y) * (x - mu(x)) / sigma(x) + mu(y), pairing instance b of x
/// with instance b of y. adain(x, x) is an exact identity.
inline Tensor4 adain(const Tensor4& x, const Tensor4& y, double eps = kDefaultEps) {
    if (x.c() != y.c())
        throw ShapeError("adain: channel mismatch " + x.shape().str() + " vs " +
                         y.shape().str());
    if (x.b() != y.b())
        throw ShapeError("adain: batch mismatch " + x.shape().str() + " vs " +
                         y.shape().str());
    const InstanceStats sx = compute_stats(x, eps);
    const InstanceStats sy = compute_stats(y, eps);
    Tensor4 s(x.b(), x.c(), 1, 1);
    Tensor4 t(x.b(), x.c(), 1, 1);
    const std::int64_t planes = s.size();
    for (std::int64_t p = 0; p < planes; ++p) {
        s[p] = sy.sigma[p] / sx.sigma[p];
        t[p] = sy.mu[p] - sx.mu[p] * s[p];
    }
    return detail::scale_shift(x, s, t);
}

} // namespace stylemix
