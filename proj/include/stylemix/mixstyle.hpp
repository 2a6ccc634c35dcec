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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylemix/autodiff.hpp"
#include "stylemix/rng.hpp"
#include "stylemix/stats.hpp"

namespace stylemix {

enum class PermMode { random_shuffle, domain_label };
enum class MixMode { convex, replace };
enum class ShuffleScope { per_layer, shared };

struct MixStyleConfig {
    double p = 0.5;       // activation probability per call
    double alpha = 0.1;   // Beta(alpha, alpha) shape
    double eps = kDefaultEps;
    PermMode perm_mode = PermMode::random_shuffle;
    MixMode mix_mode = MixMode::convex;
    ShuffleScope shuffle_scope = ShuffleScope::per_layer;

    void validate() const {
        if (p < 0.0 || p > 1.0) throw ValueError("mixstyle: p must be in [0,1]");
        if (alpha <= 0.0) throw ValueError("mixstyle: alpha must be positive");
        if (eps <= 0.0) throw ValueError("mixstyle: eps must be positive");
    }
};

/// Per-instance convex weights, each in [0,1], broadcast over (C,H,W).
struct MixWeights {
    std::vector<double> lambda;
};

/// Bijection on batch positions selecting each instance's style reference.
struct ReferencePermutation {
    std::vector<int> perm;
};

inline MixWeights sample_lambda(double alpha, int batch, Rng& rng) {
    if (alpha <= 0.0) throw ValueError("sample_lambda: alpha must be positive");
    if (batch < 1) throw ValueError("sample_lambda: batch must be >= 1");
    MixWeights w;
    w.lambda.resize(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) w.lambda[static_cast<std::size_t>(b)] = rng.beta(alpha, alpha);
    return w;
}

/// Domain-label reference construction: start from the inverse index
/// [B-1,...,0], split it into halves, reorder each half by the given shuffle
/// indices, concatenate. With identity shuffles and B=4 this is [3,2,1,0].
/// Every position in the first half maps into the second half and vice versa.
inline ReferencePermutation domain_label_permutation(int batch,
                                                     std::span<const int> shuffle_j,
                                                     std::span<const int> shuffle_i) {
    if (batch < 2 || batch % 2 != 0)
        throw ValueError("reference_permutation: domain_label mode requires even batch >= 2, got " +
                         std::to_string(batch));
    const int half = batch / 2;
    if (static_cast<int>(shuffle_j.size()) != half || static_cast<int>(shuffle_i.size()) != half)
        throw ValueError("domain_label_permutation: shuffle index length mismatch");
    std::vector<int> inverse(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) inverse[static_cast<std::size_t>(i)] = batch - 1 - i;
    ReferencePermutation out;
    out.perm.resize(static_cast<std::size_t>(batch));
    for (int i = 0; i < half; ++i) {
        out.perm[static_cast<std::size_t>(i)] = inverse[static_cast<std::size_t>(shuffle_j[i])];
        out.perm[static_cast<std::size_t>(half + i)] =
            inverse[static_cast<std::size_t>(half + shuffle_i[i])];
    }
    return out;
}

inline ReferencePermutation reference_permutation(int batch, PermMode mode, Rng& rng) {
    if (batch < 2) throw ValueError("reference_permutation: batch must be >= 2");
    if (mode == PermMode::random_shuffle) return {rng.permutation(batch)};
    if (batch % 2 != 0)
        throw ValueError("reference_permutation: domain_label mode requires even batch, got " +
                         std::to_string(batch));
    const std::vector<int> sj = rng.permutation(batch / 2);
    const std::vector<int> si = rng.permutation(batch / 2);
    return domain_label_permutation(batch, sj, si);
}

/// Mixed statistics per Eqs. of the convex mixing rule: in convex mode
/// gamma_mix = lambda*sigma + (1-lambda)*sigma[perm] (and likewise for the
/// means); in replace mode the reference statistics are taken outright.
inline std::pair<Tensor4, Tensor4> mix_statistics(const InstanceStats& stats,
                                                  const ReferencePermutation& perm,
                                                  const MixWeights& w, MixMode mode) {
    const int B = stats.mu.b();
    const int C = stats.mu.c();
    if (static_cast<int>(perm.perm.size()) != B)
        throw ShapeError("mix_statistics: permutation length " +
                         std::to_string(perm.perm.size()) + " vs batch " + std::to_string(B));
    if (mode == MixMode::convex && static_cast<int>(w.lambda.size()) != B)
        throw ShapeError("mix_statistics: lambda length " + std::to_string(w.lambda.size()) +
                         " vs batch " + std::to_string(B));
    Tensor4 gamma_mix(B, C, 1, 1);
    Tensor4 beta_mix(B, C, 1, 1);
    for (int b = 0; b < B; ++b) {
        const int r = perm.perm[static_cast<std::size_t>(b)];
        if (r < 0 || r >= B)
            throw ValueError("mix_statistics: permutation entry out of range");
        for (int c = 0; c < C; ++c) {
            const std::int64_t p = static_cast<std::int64_t>(b) * C + c;
            const std::int64_t q = static_cast<std::int64_t>(r) * C + c;
            if (mode == MixMode::convex) {
                const double lam = w.lambda[static_cast<std::size_t>(b)];
                gamma_mix[p] = lam * stats.sigma[p] + (1.0 - lam) * stats.sigma[q];
                beta_mix[p] = lam * stats.mu[p] + (1.0 - lam) * stats.mu[q];
            } else {
                gamma_mix[p] = stats.sigma[q];
                beta_mix[p] = stats.mu[q];
            }
        }
    }
    return {std::move(gamma_mix), std::move(beta_mix)};
}

/// Diagnostics of one mixstyle_forward call.
struct MixStyleTrace {
    bool activated = false;
    MixWeights lambda;
    ReferencePermutation perm;
};

/// One shared reference permutation per network pass (ShuffleScope::shared);
/// filled by the first active insertion point, reused by the rest.
struct SharedPermCache {
    std::optional<ReferencePermutation> perm;
};

/// Deterministic core of the transform: normalize x with its own grad-blocked
/// statistics and re-style with the mixed ones. Statistics are computed from
/// the node's value, never through the tape, so mu/sigma (and lambda and the
/// permutation) are constants for differentiation; the Jacobian is diagonal
/// with entry gamma_mix/sigma per (instance, channel). Folded as
/// out = x * (gamma_mix/sigma) + (beta_mix - mu*(gamma_mix/sigma)), which
/// makes lambda = 1 an exact identity.
inline Var apply_mixstyle(const Var& x, const MixWeights& w,
                          const ReferencePermutation& perm, MixMode mode, double eps) {
    const InstanceStats stats = compute_stats(x->value, eps);
    auto [gamma_mix, beta_mix] = mix_statistics(stats, perm, w, mode);
    Tensor4 s(gamma_mix.shape());
    Tensor4 t(gamma_mix.shape());
    const std::int64_t planes = s.size();
    for (std::int64_t p = 0; p < planes; ++p) {
        s[p] = gamma_mix[p] / stats.sigma[p];
        t[p] = beta_mix[p] - stats.mu[p] * s[p];
    }
    return add(mul(x, constant(std::move(s))), constant(std::move(t)));
}

/// The full training-time transform. In eval mode, or when the per-call gate
/// does not fire, the input node is returned unchanged. Draw order on the
/// stream: 1 gate uniform, then (if active) B Beta draws for lambda, then the
/// permutation draws (skipped when a shared cache already holds one).
/// force_lambda, when set, replaces the Beta draws (diagnostic hook).
inline Var mixstyle_forward(const Var& x, const MixStyleConfig& cfg, Rng& rng,
                            bool training, SharedPermCache* shared = nullptr,
                            MixStyleTrace* trace = nullptr,
                            std::optional<double> force_lambda = std::nullopt) {
    cfg.validate();
    if (!training) return x;
    const double u = rng.uniform01();
    if (!(u < cfg.p)) return x;

    const int B = x->value.b();
    if (B < 2) throw ValueError("mixstyle_forward: active transform requires batch >= 2");

    MixWeights w;
    if (force_lambda.has_value())
        w.lambda.assign(static_cast<std::size_t>(B), *force_lambda);
    else
        w = sample_lambda(cfg.alpha, B, rng);

    ReferencePermutation perm;
    if (shared != nullptr && cfg.shuffle_scope == ShuffleScope::shared) {
        if (!shared->perm.has_value())
            shared->perm = reference_permutation(B, cfg.perm_mode, rng);
        perm = *shared->perm;
    } else {
        perm = reference_permutation(B, cfg.perm_mode, rng);
    }

    if (trace != nullptr) {
        trace->activated = true;
        trace->lambda = w;
        trace->perm = perm;
    }
    return apply_mixstyle(x, w, perm, cfg.mix_mode, cfg.eps);
}

} // namespace stylemix
