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
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylemix/mixstyle.hpp"
#include "stylemix/nn.hpp"

namespace stylemix {

struct BlockSpec {
    int out_channels = 0;
    int stride = 1;
};

/// Plain conv->relu blocks named blk1..blkN, then global average pooling and
/// a linear head. insertion_mask lists the blocks after which the style
/// transform runs during training.
struct ClassifierConfig {
    std::vector<BlockSpec> blocks{{8, 2}, {16, 2}, {32, 2}, {32, 2}};
    int num_classes = 5;
    int in_channels = 3;
    std::vector<std::string> insertion_mask{"blk1", "blk2", "blk3"};
    MixStyleConfig mixstyle;

    static std::string block_name(int i) { return "blk" + std::to_string(i + 1); }

    void validate() const {
        if (blocks.empty()) throw ValueError("classifier: needs at least one block");
        if (num_classes < 2) throw ValueError("classifier: needs at least 2 classes");
        for (const BlockSpec& b : blocks)
            if (b.out_channels < 1 || b.stride < 1)
                throw ValueError("classifier: block channels and stride must be positive");
        for (const std::string& name : insertion_mask) {
            bool known = false;
            for (std::size_t i = 0; i < blocks.size(); ++i)
                if (name == block_name(static_cast<int>(i))) known = true;
            if (!known) throw ValueError("classifier: unknown insertion point '" + name + "'");
        }
        mixstyle.validate();
    }

    bool inserts_at(int block_index) const {
        const std::string name = block_name(block_index);
        return std::find(insertion_mask.begin(), insertion_mask.end(), name) !=
               insertion_mask.end();
    }
};

inline void to_json(nlohmann::json& j, const MixStyleConfig& m) {
    j = {{"p", m.p},
         {"alpha", m.alpha},
         {"eps", m.eps},
         {"perm_mode", m.perm_mode == PermMode::random_shuffle ? "random_shuffle" : "domain_label"},
         {"mix_mode", m.mix_mode == MixMode::convex ? "convex" : "replace"},
         {"shuffle_scope", m.shuffle_scope == ShuffleScope::per_layer ? "per_layer" : "shared"}};
}

inline void from_json(const nlohmann::json& j, MixStyleConfig& m) {
    j.at("p").get_to(m.p);
    j.at("alpha").get_to(m.alpha);
    j.at("eps").get_to(m.eps);
    const std::string pm = j.at("perm_mode").get<std::string>();
    const std::string mm = j.at("mix_mode").get<std::string>();
    const std::string sc = j.at("shuffle_scope").get<std::string>();
    if (pm != "random_shuffle" && pm != "domain_label")
        throw ValueError("mixstyle.perm_mode: unknown value '" + pm + "'");
    if (mm != "convex" && mm != "replace")
        throw ValueError("mixstyle.mix_mode: unknown value '" + mm + "'");
    if (sc != "per_layer" && sc != "shared")
        throw ValueError("mixstyle.shuffle_scope: unknown value '" + sc + "'");
    m.perm_mode = pm == "random_shuffle" ? PermMode::random_shuffle : PermMode::domain_label;
    m.mix_mode = mm == "convex" ? MixMode::convex : MixMode::replace;
    m.shuffle_scope = sc == "per_layer" ? ShuffleScope::per_layer : ShuffleScope::shared;
}

inline void to_json(nlohmann::json& j, const ClassifierConfig& c) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const BlockSpec& b : c.blocks) blocks.push_back({b.out_channels, b.stride});
    j = {{"blocks", blocks},
         {"num_classes", c.num_classes},
         {"in_channels", c.in_channels},
         {"insertion", c.insertion_mask},
         {"mixstyle", c.mixstyle}};
}

inline void from_json(const nlohmann::json& j, ClassifierConfig& c) {
    c.blocks.clear();
    for (const auto& b : j.at("blocks"))
        c.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    j.at("num_classes").get_to(c.num_classes);
    j.at("in_channels").get_to(c.in_channels);
    j.at("insertion").get_to(c.insertion_mask);
    j.at("mixstyle").get_to(c.mixstyle);
}

/// Per-insertion-point record of one forward pass.
struct LayerTrace {
    std::string layer;
    MixStyleTrace trace;
};

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;                     // required when training with insertion points
    const std::string* capture_layer = nullptr;
    Tensor4* captured = nullptr;            // post-block feature map of capture_layer
    std::vector<LayerTrace>* traces = nullptr;
    std::optional<double> force_lambda;     // diagnostic hook, see mixstyle_forward
};

class Model {
public:
    static Model build(const ClassifierConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg_ = cfg;
        Rng rng(seed_mix({seed, 0x1417u}));
        int cin = cfg.in_channels;
        for (const BlockSpec& b : cfg.blocks) {
            // Kaiming-uniform: bound sqrt(6/fan_in), matched to the relu gain.
            m.conv_w_.push_back(make_var(init_uniform(
                Shape4{b.out_channels, cin, 3, 3},
                std::sqrt(6.0 / (cin * 9)), rng)));
            m.conv_b_.push_back(make_var(Tensor4(1, b.out_channels, 1, 1, 0.0)));
            cin = b.out_channels;
        }
        m.head_w_ = make_var(init_uniform(Shape4{cfg.num_classes, cin, 1, 1},
                                          1.0 / std::sqrt(static_cast<double>(cin)), rng));
        m.head_b_ = make_var(Tensor4(1, cfg.num_classes, 1, 1, 0.0));
        return m;
    }

    const ClassifierConfig& config() const { return cfg_; }

    std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            out.push_back(conv_w_[i]);
            out.push_back(conv_b_[i]);
        }
        out.push_back(head_w_);
        out.push_back(head_b_);
        return out;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const Var& p : parameters()) n += p->value.size();
        return n;
    }

    /// Logits node for a (B,Cin,H,W) batch. In eval mode (or with an empty
    /// insertion mask) this is a deterministic pure function of the weights
    /// and the input.
    Var forward(const Tensor4& input, const ForwardOptions& opts = {}) const {
        if (input.c() != cfg_.in_channels)
            throw ShapeError("forward: input " + input.shape().str() + " vs expected " +
                             std::to_string(cfg_.in_channels) + " channels");
        const bool wants_mix = opts.training && !cfg_.insertion_mask.empty() &&
                               cfg_.mixstyle.p > 0.0;
        if (wants_mix && opts.rng == nullptr)
            throw ValueError("forward: training with insertion points requires an rng");
        SharedPermCache shared;
        Var x = make_var(input);
        x->needs_grad = false; // input-image gradients are never consumed
        for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
            x = relu(bias_add(conv2d(x, conv_w_[i], cfg_.blocks[i].stride, 1), conv_b_[i]));
            if (cfg_.inserts_at(static_cast<int>(i)) && opts.training && opts.rng != nullptr) {
                MixStyleTrace trace;
                x = mixstyle_forward(x, cfg_.mixstyle, *opts.rng, true,
                                     cfg_.mixstyle.shuffle_scope == ShuffleScope::shared
                                         ? &shared : nullptr,
                                     opts.traces != nullptr ? &trace : nullptr,
                                     opts.force_lambda);
                if (opts.traces != nullptr)
                    opts.traces->push_back({ClassifierConfig::block_name(static_cast<int>(i)),
                                            std::move(trace)});
            }
            if (opts.capture_layer != nullptr && opts.captured != nullptr &&
                *opts.capture_layer == ClassifierConfig::block_name(static_cast<int>(i)))
                *opts.captured = x->value;
        }
        return linear(global_avg_pool(x), head_w_, head_b_);
    }

    /// Eval-mode logits as plain values.
    Tensor4 logits_eval(const Tensor4& input) const { return forward(input)->value; }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("Model::save: cannot open " + path);
        const std::string cfg_json = nlohmann::json(cfg_).dump();
        os.write("SMCK", 4);
        const std::uint32_t version = 1;
        os.write(reinterpret_cast<const char*>(&version), sizeof(version));
        const std::uint64_t len = cfg_json.size();
        os.write(reinterpret_cast<const char*>(&len), sizeof(len));
        os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
        for (const Var& p : parameters())
            for (std::int64_t i = 0; i < p->value.size(); ++i) {
                const float f = static_cast<float>(p->value[i]);
                os.write(reinterpret_cast<const char*>(&f), sizeof(f));
            }
        if (!os) throw IoError("Model::save: write failed for " + path);
    }

    static Model load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("Model::load: cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "SMCK", 4) != 0)
            throw IoError("Model::load: " + path + " is not a checkpoint");
        std::uint32_t version = 0;
        is.read(reinterpret_cast<char*>(&version), sizeof(version));
        if (version != 1) throw IoError("Model::load: unsupported checkpoint version");
        std::uint64_t len = 0;
        is.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string cfg_json(len, '\0');
        is.read(cfg_json.data(), static_cast<std::streamsize>(len));
        if (!is) throw IoError("Model::load: truncated checkpoint header in " + path);
        const nlohmann::json j = nlohmann::json::parse(cfg_json, nullptr, false);
        if (j.is_discarded()) throw IoError("Model::load: invalid config block in " + path);
        Model m = build(j.get<ClassifierConfig>(), 0);
        for (const Var& p : m.parameters())
            for (std::int64_t i = 0; i < p->value.size(); ++i) {
                float f = 0.0f;
                is.read(reinterpret_cast<char*>(&f), sizeof(f));
                p->value[i] = static_cast<double>(f);
            }
        if (!is) throw IoError("Model::load: truncated weights in " + path);
        return m;
    }

private:
    static Tensor4 init_uniform(Shape4 shape, double bound, Rng& rng) {
        Tensor4 t(shape);
        for (std::int64_t i = 0; i < t.size(); ++i)
            t[i] = bound * (2.0 * rng.uniform01() - 1.0);
        return t;
    }

    ClassifierConfig cfg_;
    std::vector<Var> conv_w_;
    std::vector<Var> conv_b_;
    Var head_w_;
    Var head_b_;
};

} // namespace stylemix
