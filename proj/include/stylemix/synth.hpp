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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylemix/rng.hpp"
#include "stylemix/tensor.hpp"

namespace stylemix {

/// One domain's style: per-channel affine transform plus an additive
/// low-frequency sinusoidal texture, applied to the shared shape content.
struct DomainSpec {
    int domain_id = 0;
    std::vector<double> channel_shift; // length C, added mean
    std::vector<double> channel_scale; // length C, positive contrast factors
    double texture_freq = 0.0;         // cycles across the image diagonal
    double texture_amp = 0.0;          // >= 0
};

inline void to_json(nlohmann::json& j, const DomainSpec& s) {
    j = {{"domain_id", s.domain_id},
         {"channel_shift", s.channel_shift},
         {"channel_scale", s.channel_scale},
         {"texture_freq", s.texture_freq},
         {"texture_amp", s.texture_amp}};
}

inline void from_json(const nlohmann::json& j, DomainSpec& s) {
    j.at("domain_id").get_to(s.domain_id);
    j.at("channel_shift").get_to(s.channel_shift);
    j.at("channel_scale").get_to(s.channel_scale);
    j.at("texture_freq").get_to(s.texture_freq);
    j.at("texture_amp").get_to(s.texture_amp);
}

struct DatasetConfig {
    int classes = 5;
    int domains = 4;
    int per_cell = 100; // examples per (class, domain) cell
    int channels = 3;
    int height = 32;
    int width = 32;
    std::uint64_t seed = 7;
    std::vector<DomainSpec> specs; // optional; defaults derived when empty
};

enum class Split { train, val, test };

/// Labeled multi-domain image set. Class identity lives in the shape mask,
/// domain identity in the style transform; images of the same (class, index)
/// share one mask across every domain. Index layout: n = (d*K + k)*per_cell + i.
class DomainDataset {
public:
    Tensor4 images; // (N,C,H,W), values in [0,1], quantized to float32 grid
    std::vector<int> class_labels;
    std::vector<int> domain_labels;
    std::vector<DomainSpec> specs;
    Tensor4 masks; // (K*per_cell,1,H,W) pre-style masks; empty for loaded sets
    int classes = 0;
    int domains = 0;
    int per_cell = 0;
    std::uint64_t seed = 0;

    int count() const { return images.b(); }

    int index_of(int domain, int cls, int i) const {
        return (domain * classes + cls) * per_cell + i;
    }

    Tensor4 mask_for(int cls, int i) const {
        if (masks.size() == 0) throw ValueError("DomainDataset: masks unavailable (loaded set)");
        return masks_view(cls * per_cell + i);
    }

    Tensor4 image(int n) const {
        Tensor4 out(1, images.c(), images.h(), images.w());
        std::memcpy(out.data(), images.data() + static_cast<std::int64_t>(n) * plane_size(),
                    static_cast<std::size_t>(plane_size()) * sizeof(double));
        return out;
    }

    /// Global indices of one split, restricted to the given domains
    /// (all domains when the filter is empty). 80/10/10 per (class, domain)
    /// cell, deterministic in the dataset seed.
    std::vector<int> split_indices(Split split, const std::vector<int>& domain_filter = {}) const {
        std::vector<int> out;
        for (int d = 0; d < domains; ++d) {
            if (!domain_filter.empty() &&
                std::find(domain_filter.begin(), domain_filter.end(), d) == domain_filter.end())
                continue;
            for (int k = 0; k < classes; ++k) {
                const std::vector<int> order = cell_order(k);
                const int n_train = per_cell * 8 / 10;
                const int n_val = per_cell / 10;
                int lo = 0, hi = 0;
                switch (split) {
                    case Split::train: lo = 0; hi = n_train; break;
                    case Split::val: lo = n_train; hi = n_train + n_val; break;
                    case Split::test: lo = n_train + n_val; hi = per_cell; break;
                }
                for (int t = lo; t < hi; ++t)
                    out.push_back(index_of(d, k, order[static_cast<std::size_t>(t)]));
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::int64_t plane_size() const {
        return static_cast<std::int64_t>(images.c()) * images.h() * images.w();
    }

    Tensor4 masks_view(int m) const {
        Tensor4 out(1, 1, masks.h(), masks.w());
        std::memcpy(out.data(),
                    masks.data() + static_cast<std::int64_t>(m) * masks.h() * masks.w(),
                    static_cast<std::size_t>(masks.h()) * masks.w() * sizeof(double));
        return out;
    }

    // The same per-class example order drives the split in every domain, so
    // a mask never crosses split boundaries.
    std::vector<int> cell_order(int cls) const {
        Rng r(seed_mix({seed, 0x51ca7u, static_cast<std::uint64_t>(cls)}));
        return r.permutation(per_cell);
    }
};

namespace detail {

constexpr int kArchetypeCount = 8;
// Shape ink level. Kept below full scale so that domain styles move image
// statistics by amounts comparable to the shape contrast itself. Stored on
// the float32 grid so identity-styled images match masks bit for bit.
constexpr double kInkLevel = static_cast<double>(0.6f);

inline bool inside_archetype(int archetype, double dy, double dx, double r) {
    const double ady = std::abs(dy), adx = std::abs(dx);
    switch (archetype) {
        case 0: return dy * dy + dx * dx <= r * r;                        // disk
        case 1: return ady <= r && adx <= r;                              // square
        case 2: return (ady <= r / 3 && adx <= r) || (adx <= r / 3 && ady <= r); // cross
        case 3: return dy >= -r && dy <= r && adx <= (dy + r) / 2;        // triangle
        case 4: {                                                         // ring
            const double d2 = dy * dy + dx * dx;
            return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
        }
        case 5: return ady + adx <= r;                                    // diamond
        case 6: return ady <= r && adx <= r &&                            // x-cross
                        (std::abs(dy - dx) <= r / 3 || std::abs(dy + dx) <= r / 3);
        case 7: return ady <= r / 3 && adx <= r;                          // bar
    }
    return false;
}

inline Tensor4 render_mask(int archetype, int height, int width, Rng& rng) {
    const double cy = height * (0.5 + 0.11 * (2.0 * rng.uniform01() - 1.0));
    const double cx = width * (0.5 + 0.11 * (2.0 * rng.uniform01() - 1.0));
    const double r = height * (0.21 + 0.1 * rng.uniform01());
    const double rot = archetype == 0 ? 0.0 : (2.0 * rng.uniform01() - 1.0) * 0.35;
    const double cr = std::cos(rot), sr = std::sin(rot);
    Tensor4 mask(1, 1, height, width);
    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w) {
            const double dy0 = h - cy, dx0 = w - cx;
            const double dy = cr * dy0 - sr * dx0;
            const double dx = sr * dy0 + cr * dx0;
            mask.at(0, 0, h, w) = inside_archetype(archetype, dy, dx, r) ? kInkLevel : 0.0;
        }
    return mask;
}

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Hand-picked styles for the standard 4-domain, 3-channel benchmark, all
// inside the shift [-0.3,0.3] / scale [0.6,1.6] / amp [0,0.2] envelopes.
// The set forms a brightness/contrast ladder with a channel-skewed fourth
// domain: domain 0 is a faint low-contrast style whose shape signal sits
// below the texture floor of the brighter domains, so holding it out forces
// an amplitude extrapolation.
inline std::vector<DomainSpec> default_specs_3ch() {
    return {
        {0, {-0.25, -0.24, -0.26}, {0.58, 0.56, 0.59}, 3.0, 0.05},
        {1, {-0.14, -0.13, -0.15}, {0.92, 0.90, 0.94}, 10.0, 0.18},
        {2, {0.03, 0.02, 0.04}, {1.55, 1.52, 1.58}, 7.0, 0.20},
        {3, {-0.02, -0.18, -0.10}, {1.30, 0.72, 0.95}, 13.0, 0.20},
    };
}

inline double texture_phase(std::uint64_t seed, int cls, int index, int domain) {
    Rng r(seed_mix({seed, 0x9a5eu, static_cast<std::uint64_t>(cls),
                    static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(domain)}));
    return 2.0 * 3.14159265358979323846 * r.uniform01();
}

inline DomainSpec procedural_spec(int domain_id, int channels, std::uint64_t seed) {
    Rng r(seed_mix({seed, 0xd0a1u, static_cast<std::uint64_t>(domain_id)}));
    DomainSpec s;
    s.domain_id = domain_id;
    s.channel_shift.resize(static_cast<std::size_t>(channels));
    s.channel_scale.resize(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        s.channel_shift[static_cast<std::size_t>(c)] = -0.3 + 0.6 * r.uniform01();
        s.channel_scale[static_cast<std::size_t>(c)] = 0.6 + 1.0 * r.uniform01();
    }
    s.texture_freq = static_cast<double>(2 + r.uniform_int(8));
    s.texture_amp = 0.2 * r.uniform01();
    return s;
}

} // namespace detail

inline std::vector<DomainSpec> default_domain_specs(int domains, int channels,
                                                    std::uint64_t seed) {
    std::vector<DomainSpec> specs;
    if (channels == 3) {
        specs = detail::default_specs_3ch();
        if (domains < static_cast<int>(specs.size()))
            specs.resize(static_cast<std::size_t>(domains));
    }
    for (int d = static_cast<int>(specs.size()); d < domains; ++d)
        specs.push_back(detail::procedural_spec(d, channels, seed));
    return specs;
}

/// x <- clamp(scale * (shape + texture) + shift, 0, 1), one channel at a time.
/// The texture is a diagonal sinusoid at the domain's frequency and amplitude;
/// its phase varies per image so the background cannot be memorized away.
inline Tensor4 apply_style(const Tensor4& mask, const DomainSpec& spec, int channels,
                           double texture_phase = 0.0) {
    if (static_cast<int>(spec.channel_shift.size()) != channels ||
        static_cast<int>(spec.channel_scale.size()) != channels)
        throw ShapeError("apply_style: spec channel arrays do not match channel count " +
                         std::to_string(channels));
    const int H = mask.h(), W = mask.w();
    Tensor4 img(1, channels, H, W);
    for (int c = 0; c < channels; ++c) {
        const double scale = spec.channel_scale[static_cast<std::size_t>(c)];
        const double shift = spec.channel_shift[static_cast<std::size_t>(c)];
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const double tex = spec.texture_amp *
                    std::sin(2.0 * 3.14159265358979323846 * spec.texture_freq * (h + w) /
                                 static_cast<double>(H) +
                             texture_phase);
                double v = scale * (mask.at(0, 0, h, w) + tex) + shift;
                v = std::clamp(v, 0.0, 1.0);
                img.at(0, c, h, w) = detail::quantize_f32(v);
            }
    }
    return img;
}

inline DomainDataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.classes < 2) throw ValueError("generate_dataset: need at least 2 classes");
    if (cfg.classes > detail::kArchetypeCount)
        throw ValueError("generate_dataset: " + std::to_string(cfg.classes) +
                         " classes exceed the " + std::to_string(detail::kArchetypeCount) +
                         " available shape archetypes");
    if (cfg.domains < 3) throw ValueError("generate_dataset: need at least 3 domains");
    if (cfg.height != cfg.width || cfg.height < 16)
        throw ValueError("generate_dataset: images must be square with side >= 16");
    if (cfg.per_cell < 10)
        throw ValueError("generate_dataset: per_cell must be >= 10 for the 80/10/10 split");
    if (cfg.channels < 1) throw ValueError("generate_dataset: need at least 1 channel");

    DomainDataset ds;
    ds.classes = cfg.classes;
    ds.domains = cfg.domains;
    ds.per_cell = cfg.per_cell;
    ds.seed = cfg.seed;
    ds.specs = cfg.specs.empty()
                   ? default_domain_specs(cfg.domains, cfg.channels, cfg.seed)
                   : cfg.specs;
    if (static_cast<int>(ds.specs.size()) != cfg.domains)
        throw ValueError("generate_dataset: spec count " + std::to_string(ds.specs.size()) +
                         " does not match domain count " + std::to_string(cfg.domains));
    for (const DomainSpec& s : ds.specs) {
        for (double v : s.channel_scale)
            if (v <= 0.0) throw ValueError("generate_dataset: channel_scale must be positive");
        if (s.texture_amp < 0.0) throw ValueError("generate_dataset: texture_amp must be >= 0");
    }

    const int n = cfg.domains * cfg.classes * cfg.per_cell;
    ds.images = Tensor4(n, cfg.channels, cfg.height, cfg.width);
    ds.class_labels.resize(static_cast<std::size_t>(n));
    ds.domain_labels.resize(static_cast<std::size_t>(n));
    ds.masks = Tensor4(cfg.classes * cfg.per_cell, 1, cfg.height, cfg.width);

    const std::int64_t plane =
        static_cast<std::int64_t>(cfg.channels) * cfg.height * cfg.width;
    const std::int64_t mask_plane = static_cast<std::int64_t>(cfg.height) * cfg.width;
    for (int k = 0; k < cfg.classes; ++k) {
        for (int i = 0; i < cfg.per_cell; ++i) {
            Rng jitter(seed_mix({cfg.seed, static_cast<std::uint64_t>(k),
                                 static_cast<std::uint64_t>(i)}));
            const Tensor4 mask = detail::render_mask(k, cfg.height, cfg.width, jitter);
            std::memcpy(ds.masks.data() +
                            (static_cast<std::int64_t>(k) * cfg.per_cell + i) * mask_plane,
                        mask.data(), static_cast<std::size_t>(mask_plane) * sizeof(double));
            for (int d = 0; d < cfg.domains; ++d) {
                const double phase = detail::texture_phase(cfg.seed, k, i, d);
                const Tensor4 img = apply_style(mask, ds.specs[static_cast<std::size_t>(d)],
                                                cfg.channels, phase);
                const int idx = ds.index_of(d, k, i);
                std::memcpy(ds.images.data() + idx * plane, img.data(),
                            static_cast<std::size_t>(plane) * sizeof(double));
                ds.class_labels[static_cast<std::size_t>(idx)] = k;
                ds.domain_labels[static_cast<std::size_t>(idx)] = d;
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Batch sampling

struct Batch {
    Tensor4 images;
    std::vector<int> class_labels;
    std::vector<int> domain_labels;
    std::vector<int> indices; // global dataset indices, for hygiene auditing
};

enum class SamplerMode { mixed_domains, single_domain, two_domain };

namespace detail {

inline Batch gather_batch(const DomainDataset& ds, const std::vector<int>& picks) {
    const int B = static_cast<int>(picks.size());
    Batch batch;
    batch.images = Tensor4(B, ds.images.c(), ds.images.h(), ds.images.w());
    const std::int64_t plane =
        static_cast<std::int64_t>(ds.images.c()) * ds.images.h() * ds.images.w();
    for (int b = 0; b < B; ++b) {
        std::memcpy(batch.images.data() + b * plane,
                    ds.images.data() + static_cast<std::int64_t>(picks[static_cast<std::size_t>(b)]) * plane,
                    static_cast<std::size_t>(plane) * sizeof(double));
        batch.class_labels.push_back(ds.class_labels[static_cast<std::size_t>(picks[static_cast<std::size_t>(b)])]);
        batch.domain_labels.push_back(ds.domain_labels[static_cast<std::size_t>(picks[static_cast<std::size_t>(b)])]);
    }
    batch.indices = picks;
    return batch;
}

// Draw `count` distinct pool entries, classes uniform: pick a class, then an
// unused example of it, rejecting exhausted classes.
inline void pick_class_uniform(const DomainDataset& ds, const std::vector<int>& pool,
                               int count, Rng& rng, std::vector<int>& out) {
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(ds.classes));
    for (int idx : pool) buckets[static_cast<std::size_t>(ds.class_labels[static_cast<std::size_t>(idx)])].push_back(idx);
    std::vector<std::vector<char>> used(buckets.size());
    for (std::size_t k = 0; k < buckets.size(); ++k) used[k].assign(buckets[k].size(), 0);
    std::vector<int> remaining(buckets.size());
    int total = 0;
    for (std::size_t k = 0; k < buckets.size(); ++k) {
        remaining[k] = static_cast<int>(buckets[k].size());
        total += remaining[k];
    }
    if (total < count)
        throw ValueError("sample: insufficient examples (" + std::to_string(total) +
                         " available, " + std::to_string(count) + " requested)");
    for (int t = 0; t < count; ++t) {
        for (;;) {
            const auto k = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(ds.classes)));
            if (remaining[k] == 0) continue;
            const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(buckets[k].size())));
            if (used[k][j]) continue;
            used[k][j] = 1;
            --remaining[k];
            out.push_back(buckets[k][j]);
            break;
        }
    }
}

inline std::vector<int> sample_distinct(const std::vector<int>& pool, int count, Rng& rng) {
    if (count > static_cast<int>(pool.size()))
        throw ValueError("sample: requested " + std::to_string(count) + " from pool of " +
                         std::to_string(pool.size()));
    std::vector<int> work = pool;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::uint64_t>(work.size() - static_cast<std::size_t>(t))) + static_cast<std::uint64_t>(t));
        std::swap(work[static_cast<std::size_t>(t)], work[j]);
        out.push_back(work[static_cast<std::size_t>(t)]);
    }
    return out;
}

} // namespace detail

/// Two-domain batch [x^i, x^j]: first half all from domain i, second half all
/// from domain j, classes uniform, no index repeats within the batch.
inline Batch sample_two_domain_batch(const DomainDataset& ds, const std::vector<int>& pool,
                                     int dom_i, int dom_j, int half, Rng& rng) {
    if (dom_i == dom_j)
        throw ValueError("sample_two_domain_batch: domains must differ, got " +
                         std::to_string(dom_i) + " twice");
    if (half < 1) throw ValueError("sample_two_domain_batch: half must be >= 1");
    std::vector<int> pool_i, pool_j;
    for (int idx : pool) {
        const int d = ds.domain_labels[static_cast<std::size_t>(idx)];
        if (d == dom_i) pool_i.push_back(idx);
        if (d == dom_j) pool_j.push_back(idx);
    }
    std::vector<int> picks;
    picks.reserve(static_cast<std::size_t>(2 * half));
    detail::pick_class_uniform(ds, pool_i, half, rng, picks);
    detail::pick_class_uniform(ds, pool_j, half, rng, picks);
    return detail::gather_batch(ds, picks);
}

/// mixed_domains: uniform without replacement over the whole pool.
/// single_domain: one uniformly chosen domain per batch, then uniform within it.
inline Batch sample_batch(const DomainDataset& ds, const std::vector<int>& pool,
                          SamplerMode mode, int batch, Rng& rng) {
    if (pool.empty()) throw ValueError("sample_batch: empty source pool");
    if (mode == SamplerMode::two_domain)
        throw ValueError("sample_batch: two_domain batches need explicit domains, "
                         "use sample_two_domain_batch");
    if (mode == SamplerMode::mixed_domains)
        return detail::gather_batch(ds, detail::sample_distinct(pool, batch, rng));
    std::vector<int> present;
    for (int idx : pool) {
        const int d = ds.domain_labels[static_cast<std::size_t>(idx)];
        if (std::find(present.begin(), present.end(), d) == present.end()) present.push_back(d);
    }
    std::sort(present.begin(), present.end());
    const int dom = present[static_cast<std::size_t>(rng.uniform_int(present.size()))];
    std::vector<int> dom_pool;
    for (int idx : pool)
        if (ds.domain_labels[static_cast<std::size_t>(idx)] == dom) dom_pool.push_back(idx);
    return detail::gather_batch(ds, detail::sample_distinct(dom_pool, batch, rng));
}

// ---------------------------------------------------------------------------
// Flat binary export: "SMLD" magic, little-endian u32 header fields
// (version, N, C, H, W, K, D), float32 pixels, then int32 class labels and
// int32 domain labels. DomainSpecs travel in a JSON sidecar at <path>.json.

namespace detail {

constexpr std::uint32_t kSmldVersion = 1;

template <typename T>
inline void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
inline T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace detail

inline void save_dataset(const DomainDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_dataset: cannot open " + path);
    os.write("SMLD", 4);
    detail::write_pod<std::uint32_t>(os, detail::kSmldVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.count()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.images.c()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.images.h()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.images.w()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.classes));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ds.domains));
    for (std::int64_t i = 0; i < ds.images.size(); ++i)
        detail::write_pod<float>(os, static_cast<float>(ds.images[i]));
    for (int v : ds.class_labels) detail::write_pod<std::int32_t>(os, v);
    for (int v : ds.domain_labels) detail::write_pod<std::int32_t>(os, v);
    if (!os) throw IoError("save_dataset: write failed for " + path);

    nlohmann::json side = {{"seed", ds.seed}, {"per_cell", ds.per_cell}, {"specs", ds.specs}};
    std::ofstream js(path + ".json");
    if (!js) throw IoError("save_dataset: cannot open " + path + ".json");
    js << side.dump(2) << "\n";
}

inline DomainDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_dataset: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SMLD", 4) != 0)
        throw IoError("load_dataset: " + path + " is not an SMLD file");
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != detail::kSmldVersion)
        throw IoError("load_dataset: unsupported SMLD version " + std::to_string(version));
    const auto n = detail::read_pod<std::uint32_t>(is);
    const auto c = detail::read_pod<std::uint32_t>(is);
    const auto h = detail::read_pod<std::uint32_t>(is);
    const auto w = detail::read_pod<std::uint32_t>(is);
    const auto k = detail::read_pod<std::uint32_t>(is);
    const auto d = detail::read_pod<std::uint32_t>(is);
    if (!is || k == 0 || d == 0 || n == 0 || n % (k * d) != 0)
        throw IoError("load_dataset: inconsistent SMLD header in " + path);

    DomainDataset ds;
    ds.classes = static_cast<int>(k);
    ds.domains = static_cast<int>(d);
    ds.per_cell = static_cast<int>(n / (k * d));
    ds.images = Tensor4(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
                        static_cast<int>(w));
    for (std::int64_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = static_cast<double>(detail::read_pod<float>(is));
    ds.class_labels.resize(n);
    ds.domain_labels.resize(n);
    for (auto& v : ds.class_labels) v = detail::read_pod<std::int32_t>(is);
    for (auto& v : ds.domain_labels) v = detail::read_pod<std::int32_t>(is);
    if (!is) throw IoError("load_dataset: truncated SMLD payload in " + path);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (ds.class_labels[i] < 0 || ds.class_labels[i] >= ds.classes ||
            ds.domain_labels[i] < 0 || ds.domain_labels[i] >= ds.domains)
            throw IoError("load_dataset: label out of range in " + path);
    }

    std::ifstream js(path + ".json");
    if (!js) throw IoError("load_dataset: missing sidecar " + path + ".json");
    nlohmann::json side = nlohmann::json::parse(js, nullptr, /*allow_exceptions=*/false);
    if (side.is_discarded()) throw IoError("load_dataset: invalid sidecar " + path + ".json");
    ds.seed = side.at("seed").get<std::uint64_t>();
    ds.specs = side.at("specs").get<std::vector<DomainSpec>>();
    if (static_cast<int>(ds.specs.size()) != ds.domains)
        throw IoError("load_dataset: sidecar spec count mismatch in " + path + ".json");
    return ds;
}

} // namespace stylemix
