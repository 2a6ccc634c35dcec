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

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylemix/analysis.hpp"
#include "stylemix/trainer.hpp"

namespace stylemix {

constexpr const char* kToolVersion = "0.1.0";

/// Defaults encode the recommended operating point (p=0.5, alpha=0.1,
/// eps=1e-6, style mixing after blk1-3), so a bare run exercises it.
inline nlohmann::json default_config() {
    return nlohmann::json{
        {"dataset",
         {{"classes", 5},
          {"domains", 4},
          {"per_cell", 100},
          {"channels", 3},
          {"height", 32},
          {"width", 32},
          {"seed", 7},
          {"file", ""}}},
        {"model",
         {{"blocks", nlohmann::json::array({{8, 2}, {16, 2}, {32, 2}, {32, 2}})},
          {"insertion", {"blk1", "blk2", "blk3"}}}},
        {"mixstyle",
         {{"p", 0.5},
          {"alpha", 0.1},
          {"eps", 1e-6},
          {"perm_mode", "random_shuffle"},
          {"mix_mode", "convex"},
          {"shuffle_scope", "per_layer"}}},
        {"optimizer",
         {{"lr", 0.01},
          {"momentum", 0.9},
          {"weight_decay", 5e-4},
          {"grad_clip", 5.0},
          {"epochs", 30},
          {"batch_size", 32}}},
        {"train", {{"baseline", "mixstyle"}, {"sampler", "auto"}}},
        {"ablation", {{"kind", "insertion"}}},
        {"analysis", {{"layers", "all"}}},
    };
}

struct ResolvedConfig {
    DatasetConfig dataset;
    std::string dataset_file; // load instead of generating when non-empty
    TrainConfig train;        // classifier and mixstyle live inside
    AblationKind ablation = AblationKind::insertion;
    std::vector<std::string> analysis_layers;
    nlohmann::json resolved;  // fully-expanded JSON for the manifest
};

namespace detail {

inline const nlohmann::json& section(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key) || !j.at(key).is_object())
        throw ConfigError(key, "missing or not an object");
    return j.at(key);
}

inline double num_field(const nlohmann::json& sec, const std::string& path,
                        const std::string& key) {
    if (!sec.contains(key) || !sec.at(key).is_number())
        throw ConfigError(path + "." + key, "missing or not a number");
    return sec.at(key).get<double>();
}

inline int int_field(const nlohmann::json& sec, const std::string& path,
                     const std::string& key) {
    if (!sec.contains(key) || !sec.at(key).is_number_integer())
        throw ConfigError(path + "." + key, "missing or not an integer");
    return sec.at(key).get<int>();
}

inline std::string str_field(const nlohmann::json& sec, const std::string& path,
                             const std::string& key) {
    if (!sec.contains(key) || !sec.at(key).is_string())
        throw ConfigError(path + "." + key, "missing or not a string");
    return sec.at(key).get<std::string>();
}

inline void reject_unknown(const nlohmann::json& sec, const std::string& path,
                           std::initializer_list<const char*> known) {
    for (auto it = sec.begin(); it != sec.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(path + "." + it.key(), "unknown key");
    }
}

} // namespace detail

/// Merge `overlay` into `base` recursively (objects merge, scalars replace).
inline void merge_config(nlohmann::json& base, const nlohmann::json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base.at(it.key()).is_object())
            merge_config(base.at(it.key()), *it);
        else
            base[it.key()] = *it;
    }
}

/// Apply one `--set dotted.key=value` override. The value is parsed as JSON
/// when possible and treated as a bare string otherwise.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(assignment, "override must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError(path, "empty key segment in override");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !node->at(key).is_object()) (*node)[key] = nlohmann::json::object();
        node = &node->at(key);
        start = dot + 1;
    }
}

/// Read a config file. A manifest written by a previous run is accepted
/// directly: its "config" object (and "seeds", if present) are picked up,
/// which makes reruns from a manifest exact.
inline std::pair<nlohmann::json, std::optional<std::vector<std::uint64_t>>>
load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path, "cannot open config file");
    nlohmann::json j = nlohmann::json::parse(is, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError(path, "invalid JSON");
    std::optional<std::vector<std::uint64_t>> seeds;
    if (j.contains("config") && j.at("config").is_object()) {
        if (j.contains("seeds") && j.at("seeds").is_array())
            seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        j = j.at("config");
    }
    return {j, seeds};
}

inline ResolvedConfig resolve_config(nlohmann::json user) {
    nlohmann::json cfg = default_config();
    merge_config(cfg, user);
    detail::reject_unknown(cfg, "config",
                           {"dataset", "model", "mixstyle", "optimizer", "train", "ablation",
                            "analysis"});

    ResolvedConfig out;

    const auto& ds = detail::section(cfg, "dataset");
    detail::reject_unknown(ds, "dataset",
                           {"classes", "domains", "per_cell", "channels", "height", "width",
                            "seed", "file"});
    out.dataset.classes = detail::int_field(ds, "dataset", "classes");
    out.dataset.domains = detail::int_field(ds, "dataset", "domains");
    out.dataset.per_cell = detail::int_field(ds, "dataset", "per_cell");
    out.dataset.channels = detail::int_field(ds, "dataset", "channels");
    out.dataset.height = detail::int_field(ds, "dataset", "height");
    out.dataset.width = detail::int_field(ds, "dataset", "width");
    out.dataset.seed = static_cast<std::uint64_t>(detail::int_field(ds, "dataset", "seed"));
    out.dataset_file = detail::str_field(ds, "dataset", "file");
    if (out.dataset.classes < 2) throw ConfigError("dataset.classes", "must be >= 2");
    if (out.dataset.domains < 3) throw ConfigError("dataset.domains", "must be >= 3");
    if (out.dataset.per_cell < 10) throw ConfigError("dataset.per_cell", "must be >= 10");
    if (out.dataset.channels < 1) throw ConfigError("dataset.channels", "must be >= 1");
    if (out.dataset.height != out.dataset.width || out.dataset.height < 16)
        throw ConfigError("dataset.height", "images must be square with side >= 16");

    const auto& model = detail::section(cfg, "model");
    detail::reject_unknown(model, "model", {"blocks", "insertion"});
    if (!model.contains("blocks") || !model.at("blocks").is_array() || model.at("blocks").empty())
        throw ConfigError("model.blocks", "must be a non-empty array of [channels, stride]");
    ClassifierConfig net;
    net.blocks.clear();
    for (const auto& b : model.at("blocks")) {
        if (!b.is_array() || b.size() != 2 || !b.at(0).is_number_integer() ||
            !b.at(1).is_number_integer())
            throw ConfigError("model.blocks", "each block must be [channels, stride]");
        net.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
        if (net.blocks.back().out_channels < 1 || net.blocks.back().stride < 1)
            throw ConfigError("model.blocks", "channels and stride must be positive");
    }
    if (!model.contains("insertion") || !model.at("insertion").is_array())
        throw ConfigError("model.insertion", "must be an array of block names");
    net.insertion_mask.clear();
    for (const auto& name : model.at("insertion")) {
        if (!name.is_string()) throw ConfigError("model.insertion", "entries must be strings");
        net.insertion_mask.push_back(name.get<std::string>());
    }
    net.num_classes = out.dataset.classes;
    net.in_channels = out.dataset.channels;

    const auto& mix = detail::section(cfg, "mixstyle");
    detail::reject_unknown(mix, "mixstyle",
                           {"p", "alpha", "eps", "perm_mode", "mix_mode", "shuffle_scope"});
    net.mixstyle.p = detail::num_field(mix, "mixstyle", "p");
    net.mixstyle.alpha = detail::num_field(mix, "mixstyle", "alpha");
    net.mixstyle.eps = detail::num_field(mix, "mixstyle", "eps");
    if (net.mixstyle.p < 0.0 || net.mixstyle.p > 1.0)
        throw ConfigError("mixstyle.p", "must be in [0,1]");
    if (net.mixstyle.alpha <= 0.0) throw ConfigError("mixstyle.alpha", "must be > 0");
    if (net.mixstyle.eps <= 0.0) throw ConfigError("mixstyle.eps", "must be > 0");
    {
        const std::string pm = detail::str_field(mix, "mixstyle", "perm_mode");
        if (pm == "random_shuffle") net.mixstyle.perm_mode = PermMode::random_shuffle;
        else if (pm == "domain_label") net.mixstyle.perm_mode = PermMode::domain_label;
        else throw ConfigError("mixstyle.perm_mode", "unknown value '" + pm + "'");
        const std::string mm = detail::str_field(mix, "mixstyle", "mix_mode");
        if (mm == "convex") net.mixstyle.mix_mode = MixMode::convex;
        else if (mm == "replace") net.mixstyle.mix_mode = MixMode::replace;
        else throw ConfigError("mixstyle.mix_mode", "unknown value '" + mm + "'");
        const std::string sc = detail::str_field(mix, "mixstyle", "shuffle_scope");
        if (sc == "per_layer") net.mixstyle.shuffle_scope = ShuffleScope::per_layer;
        else if (sc == "shared") net.mixstyle.shuffle_scope = ShuffleScope::shared;
        else throw ConfigError("mixstyle.shuffle_scope", "unknown value '" + sc + "'");
    }
    try {
        net.validate();
    } catch (const ValueError& e) {
        throw ConfigError("model.insertion", e.what());
    }

    const auto& opt = detail::section(cfg, "optimizer");
    detail::reject_unknown(opt, "optimizer",
                           {"lr", "momentum", "weight_decay", "grad_clip", "epochs",
                            "batch_size"});
    out.train.lr = detail::num_field(opt, "optimizer", "lr");
    out.train.momentum = detail::num_field(opt, "optimizer", "momentum");
    out.train.weight_decay = detail::num_field(opt, "optimizer", "weight_decay");
    out.train.grad_clip = detail::num_field(opt, "optimizer", "grad_clip");
    out.train.epochs = detail::int_field(opt, "optimizer", "epochs");
    out.train.batch_size = detail::int_field(opt, "optimizer", "batch_size");
    if (out.train.lr <= 0.0) throw ConfigError("optimizer.lr", "must be > 0");
    if (out.train.momentum < 0.0 || out.train.momentum >= 1.0)
        throw ConfigError("optimizer.momentum", "must be in [0,1)");
    if (out.train.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay", "must be >= 0");
    if (out.train.epochs < 1) throw ConfigError("optimizer.epochs", "must be >= 1");
    if (out.train.batch_size < 4 || out.train.batch_size % 2 != 0)
        throw ConfigError("optimizer.batch_size", "must be even and >= 4");

    const auto& tr = detail::section(cfg, "train");
    detail::reject_unknown(tr, "train", {"baseline", "sampler"});
    const std::string baseline = detail::str_field(tr, "train", "baseline");
    if (baseline == "vanilla") out.train.baseline = BaselineKind::vanilla;
    else if (baseline == "mixstyle") out.train.baseline = BaselineKind::mixstyle;
    else if (baseline == "mixup_no_interp") out.train.baseline = BaselineKind::mixup_no_interp;
    else throw ConfigError("train.baseline", "unknown value '" + baseline + "'");
    std::string sampler = detail::str_field(tr, "train", "sampler");
    if (sampler == "auto")
        sampler = (out.train.baseline == BaselineKind::mixstyle &&
                   net.mixstyle.perm_mode == PermMode::domain_label)
                      ? "two_domain"
                      : "mixed_domains";
    if (sampler == "mixed_domains") out.train.sampler = SamplerMode::mixed_domains;
    else if (sampler == "single_domain") out.train.sampler = SamplerMode::single_domain;
    else if (sampler == "two_domain") out.train.sampler = SamplerMode::two_domain;
    else throw ConfigError("train.sampler", "unknown value '" + sampler + "'");
    if (out.train.baseline == BaselineKind::mixstyle &&
        net.mixstyle.perm_mode == PermMode::domain_label &&
        out.train.sampler != SamplerMode::two_domain)
        throw ConfigError("train.sampler", "domain_label mixstyle requires two_domain batches");
    out.train.classifier = net;

    const auto& ab = detail::section(cfg, "ablation");
    detail::reject_unknown(ab, "ablation", {"kind"});
    const std::string kind = detail::str_field(ab, "ablation", "kind");
    if (kind == "insertion") out.ablation = AblationKind::insertion;
    else if (kind == "mix_vs_replace") out.ablation = AblationKind::mix_vs_replace;
    else if (kind == "shuffle_scope") out.ablation = AblationKind::shuffle_scope;
    else if (kind == "alpha_sweep") out.ablation = AblationKind::alpha_sweep;
    else if (kind == "same_domain") out.ablation = AblationKind::same_domain;
    else if (kind == "label_free_vs_label") out.ablation = AblationKind::label_free_vs_label;
    else throw ConfigError("ablation.kind", "unknown value '" + kind + "'");

    const auto& an = detail::section(cfg, "analysis");
    detail::reject_unknown(an, "analysis", {"layers"});
    out.analysis_layers.clear();
    if (an.contains("layers") && an.at("layers").is_string() &&
        an.at("layers").get<std::string>() == "all") {
        for (std::size_t i = 0; i < net.blocks.size(); ++i)
            out.analysis_layers.push_back(ClassifierConfig::block_name(static_cast<int>(i)));
    } else {
        if (!an.contains("layers") || !an.at("layers").is_array())
            throw ConfigError("analysis.layers", "must be \"all\" or an array of block names");
        for (const auto& layer : an.at("layers")) {
            if (!layer.is_string())
                throw ConfigError("analysis.layers", "entries must be strings");
            const std::string name = layer.get<std::string>();
            bool known = false;
            for (std::size_t i = 0; i < net.blocks.size(); ++i)
                if (name == ClassifierConfig::block_name(static_cast<int>(i))) known = true;
            if (!known) throw ConfigError("analysis.layers", "unknown layer '" + name + "'");
            out.analysis_layers.push_back(name);
        }
    }
    cfg["analysis"]["layers"] = out.analysis_layers;

    cfg["train"]["sampler"] = sampler; // expose the resolved sampler
    out.resolved = cfg;
    return out;
}

/// Build or load the dataset this config points at.
inline DomainDataset open_dataset(const ResolvedConfig& cfg) {
    if (!cfg.dataset_file.empty()) return load_dataset(cfg.dataset_file);
    return generate_dataset(cfg.dataset);
}

} // namespace stylemix
