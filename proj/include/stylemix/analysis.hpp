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

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stylemix/net.hpp"
#include "stylemix/trainer.hpp"

namespace stylemix {

/// Per-instance style vectors at one layer: [mu_1..mu_C, sigma_1..sigma_C]
/// of the post-block feature map, eval mode.
struct StyleEmbedding {
    std::string layer;
    int feature_channels = 0;                 // C; vectors are 2C wide
    std::vector<std::vector<double>> vectors; // (N, 2C)
    std::vector<int> domain_labels;
    std::vector<int> class_labels;
};

inline StyleEmbedding collect_style_stats(const Model& model, const DomainDataset& ds,
                                          const std::vector<int>& indices,
                                          const std::string& layer,
                                          double eps = kDefaultEps) {
    bool known = false;
    for (std::size_t i = 0; i < model.config().blocks.size(); ++i)
        if (layer == ClassifierConfig::block_name(static_cast<int>(i))) known = true;
    if (!known) throw ValueError("collect_style_stats: unknown layer '" + layer + "'");
    if (indices.empty()) throw ValueError("collect_style_stats: empty index set");

    StyleEmbedding emb;
    emb.layer = layer;
    constexpr int kChunk = 64;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t stop = std::min(indices.size(), start + kChunk);
        const std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                     indices.begin() + static_cast<std::ptrdiff_t>(stop));
        const Batch batch = detail::gather_batch(ds, chunk);
        Tensor4 captured;
        ForwardOptions opts;
        opts.capture_layer = &layer;
        opts.captured = &captured;
        (void)model.forward(batch.images, opts);
        const InstanceStats st = compute_stats(captured, eps);
        const int C = captured.c();
        emb.feature_channels = C;
        for (int b = 0; b < captured.b(); ++b) {
            std::vector<double> v(static_cast<std::size_t>(2 * C));
            for (int c = 0; c < C; ++c) {
                v[static_cast<std::size_t>(c)] = st.mu[b * C + c];
                v[static_cast<std::size_t>(C + c)] = st.sigma[b * C + c];
            }
            emb.vectors.push_back(std::move(v));
            emb.domain_labels.push_back(batch.domain_labels[static_cast<std::size_t>(b)]);
            emb.class_labels.push_back(batch.class_labels[static_cast<std::size_t>(b)]);
        }
    }
    return emb;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix, good enough for
// the small 2C x 2C covariance matrices used here.
inline void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& evals,
                         std::vector<double>& evecs) {
    evecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) evecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = evecs[static_cast<std::size_t>(k) * n + p];
                    const double vkq = evecs[static_cast<std::size_t>(k) * n + q];
                    evecs[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
                    evecs[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
                }
            }
    }
    evals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) evals[static_cast<std::size_t>(i)] = at(i, i);
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace detail

/// Mean silhouette with Euclidean distance; singleton clusters score 0.
inline double silhouette_score(const std::vector<std::vector<double>>& points,
                               const std::vector<int>& labels) {
    const std::size_t n = points.size();
    if (n < 3) throw ValueError("silhouette_score: need at least 3 points");
    if (labels.size() != n) throw ValueError("silhouette_score: label count mismatch");
    std::vector<int> groups;
    for (int l : labels)
        if (std::find(groups.begin(), groups.end(), l) == groups.end()) groups.push_back(l);
    if (groups.size() < 2) throw ValueError("silhouette_score: need at least 2 groups");

    std::vector<std::size_t> group_size(groups.size(), 0);
    auto group_of = [&](int label) {
        return static_cast<std::size_t>(
            std::find(groups.begin(), groups.end(), label) - groups.begin());
    };
    for (int l : labels) ++group_size[group_of(l)];

    double total = 0.0;
    std::vector<double> mean_dist(groups.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            mean_dist[group_of(labels[j])] += detail::euclidean(points[i], points[j]);
        }
        const std::size_t gi = group_of(labels[i]);
        if (group_size[gi] <= 1) continue; // silhouette of a singleton is 0
        const double a = mean_dist[gi] / static_cast<double>(group_size[gi] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (g == gi || group_size[g] == 0) continue;
            b = std::min(b, mean_dist[g] / static_cast<double>(group_size[g]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

struct ProjectionResult {
    std::vector<std::array<double, 2>> coords; // PCA to 2 components
    double domain_silhouette = 0.0;            // in the full 2C-dim space
    double class_silhouette = 0.0;
};

/// PCA by covariance eigendecomposition, components ordered by eigenvalue,
/// sign fixed so the largest-magnitude loading of each component is positive.
/// Silhouettes are computed in the original embedding space.
inline ProjectionResult project_and_score(const StyleEmbedding& emb) {
    const std::size_t n = emb.vectors.size();
    if (n < 3) throw ValueError("project_and_score: need at least 3 instances");
    const std::size_t d = emb.vectors.front().size();

    std::vector<double> mean(d, 0.0);
    for (const auto& v : emb.vectors)
        for (std::size_t k = 0; k < d; ++k) mean[k] += v[k];
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    double total_var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            centered[i][k] = emb.vectors[i][k] - mean[k];
            total_var += centered[i][k] * centered[i][k];
        }
    if (total_var < 1e-24)
        throw ValueError("project_and_score: zero-variance embedding set");

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) cov[r * d + c] += centered[i][r] * centered[i][c];
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) {
            cov[r * d + c] /= static_cast<double>(n - 1);
            cov[c * d + r] = cov[r * d + c];
        }

    std::vector<double> evals, evecs;
    detail::jacobi_eigen(cov, static_cast<int>(d), evals, evecs);
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });

    std::array<std::vector<double>, 2> comp;
    for (int pc = 0; pc < 2; ++pc) {
        comp[static_cast<std::size_t>(pc)].resize(d);
        const std::size_t col = order[static_cast<std::size_t>(std::min<std::size_t>(pc, d - 1))];
        for (std::size_t k = 0; k < d; ++k)
            comp[static_cast<std::size_t>(pc)][k] = evecs[k * d + col];
        std::size_t arg = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (std::abs(comp[static_cast<std::size_t>(pc)][k]) >
                std::abs(comp[static_cast<std::size_t>(pc)][arg]))
                arg = k;
        if (comp[static_cast<std::size_t>(pc)][arg] < 0.0)
            for (double& v : comp[static_cast<std::size_t>(pc)]) v = -v;
    }

    ProjectionResult out;
    out.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int pc = 0; pc < 2; ++pc) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                s += centered[i][k] * comp[static_cast<std::size_t>(pc)][k];
            out.coords[i][static_cast<std::size_t>(pc)] = s;
        }
    out.domain_silhouette = silhouette_score(emb.vectors, emb.domain_labels);
    out.class_silhouette = silhouette_score(emb.vectors, emb.class_labels);
    return out;
}

} // namespace stylemix
