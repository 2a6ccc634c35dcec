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

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stylemix/net.hpp"
#include "stylemix/synth.hpp"

namespace stylemix {

enum class BaselineKind { vanilla, mixstyle, mixup_no_interp };

inline const char* baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::vanilla: return "vanilla";
        case BaselineKind::mixstyle: return "mixstyle";
        case BaselineKind::mixup_no_interp: return "mixup_no_interp";
    }
    return "?";
}

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double grad_clip = 5.0; // global-norm ceiling; <= 0 disables
    std::uint64_t seed = 1;
    SamplerMode sampler = SamplerMode::mixed_domains;
    BaselineKind baseline = BaselineKind::mixstyle;
    ClassifierConfig classifier;

    void validate() const {
        if (epochs < 1) throw ValueError("trainer: epochs must be >= 1");
        if (batch_size < 4 || batch_size % 2 != 0)
            throw ValueError("trainer: batch size must be even and >= 4");
        if (lr <= 0.0) throw ValueError("trainer: learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ValueError("trainer: momentum must be in [0,1)");
        if (weight_decay < 0.0) throw ValueError("trainer: weight decay must be >= 0");
        classifier.validate();
        if (baseline == BaselineKind::mixstyle &&
            classifier.mixstyle.perm_mode == PermMode::domain_label &&
            sampler != SamplerMode::two_domain)
            throw ValueError("trainer: domain_label mixstyle requires the two_domain sampler");
    }
};

struct CurvePoint {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
};

struct GateCount {
    long active = 0;
    long total = 0;
    double fraction() const { return total == 0 ? 0.0 : static_cast<double>(active) / total; }
};

struct TrainOutput {
    Model model;
    std::vector<CurvePoint> curve;
    std::map<std::string, GateCount> gating;   // per insertion point
    std::vector<int> sampled_indices;          // every index seen during training
    double final_val_acc = 0.0;
};

/// Pixel-level mixing with the label interpolation removed: each image is
/// blended with a random partner, x <- w*x + (1-w)*x[perm], w ~ U[0,1] per
/// instance; class labels stay untouched.
inline void mixup_blend(Tensor4& images, std::span<const double> weights,
                        std::span<const int> perm) {
    const int B = images.b();
    if (static_cast<int>(weights.size()) != B || static_cast<int>(perm.size()) != B)
        throw ShapeError("mixup_blend: weights/permutation length vs batch " +
                         std::to_string(B));
    const std::int64_t plane = static_cast<std::int64_t>(images.c()) * images.h() * images.w();
    const Tensor4 src = images;
    for (int b = 0; b < B; ++b) {
        const double w = weights[static_cast<std::size_t>(b)];
        const double* self = src.data() + b * plane;
        const double* other = src.data() + static_cast<std::int64_t>(perm[static_cast<std::size_t>(b)]) * plane;
        double* dst = images.data() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] = w * self[i] + (1.0 - w) * other[i];
    }
}

/// Draw order: B uniforms for the weights, then the partner permutation.
inline void mixup_no_interp(Batch& batch, Rng& rng) {
    const int B = batch.images.b();
    if (B < 2) throw ValueError("mixup_no_interp: batch must be >= 2");
    std::vector<double> w(static_cast<std::size_t>(B));
    for (double& v : w) v = rng.uniform01();
    const std::vector<int> perm = rng.permutation(B);
    mixup_blend(batch.images, w, perm);
}

inline double evaluate(const Model& model, const DomainDataset& ds,
                       const std::vector<int>& indices, int eval_batch = 64) {
    if (indices.empty()) throw ValueError("evaluate: empty index set");
    long correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(eval_batch)) {
        const std::size_t stop = std::min(indices.size(), start + static_cast<std::size_t>(eval_batch));
        const std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                     indices.begin() + static_cast<std::ptrdiff_t>(stop));
        const Batch b = detail::gather_batch(ds, chunk);
        const Tensor4 logits = model.logits_eval(b.images);
        const int K = logits.c();
        for (int i = 0; i < logits.b(); ++i) {
            int arg = 0;
            for (int k = 1; k < K; ++k)
                if (logits[i * K + k] > logits[i * K + arg]) arg = k;
            if (arg == b.class_labels[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(indices.size());
}

/// Minibatch SGD with momentum and weight decay on softmax cross-entropy.
/// Deterministic given (config, dataset, source set). Three streams derive
/// from cfg.seed: model init, batch sampling, and augmentation (mixup blending
/// and every style-mixing draw). Keeping the sampling stream separate means
/// arms that share a seed see identical batch sequences, so arm comparisons
/// are paired.
inline TrainOutput train(const TrainConfig& cfg, const DomainDataset& ds,
                         const std::vector<int>& source_domains) {
    cfg.validate();
    ClassifierConfig net_cfg = cfg.classifier;
    net_cfg.num_classes = ds.classes;
    net_cfg.in_channels = ds.images.c();
    if (cfg.baseline != BaselineKind::mixstyle) net_cfg.insertion_mask.clear();

    const std::vector<int> train_pool = ds.split_indices(Split::train, source_domains);
    const std::vector<int> val_pool = ds.split_indices(Split::val, source_domains);
    if (static_cast<int>(train_pool.size()) < cfg.batch_size)
        throw ValueError("trainer: training pool smaller than one batch");

    TrainOutput out{Model::build(net_cfg, cfg.seed), {}, {}, {}, 0.0};
    Rng rng_data(seed_mix({cfg.seed, 0x7ea1u}));
    Rng rng_aug(seed_mix({cfg.seed, 0xa406u}));

    std::vector<Var> params = out.model.parameters();
    std::vector<Tensor4> velocity;
    velocity.reserve(params.size());
    for (const Var& p : params) velocity.emplace_back(p->value.shape(), 0.0);

    const int steps_per_epoch =
        std::max<int>(1, static_cast<int>(train_pool.size()) / cfg.batch_size);
    std::vector<int> sources = source_domains;
    if (sources.empty())
        for (int d = 0; d < ds.domains; ++d) sources.push_back(d);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            Batch batch = [&] {
                if (cfg.sampler == SamplerMode::two_domain) {
                    const auto a = static_cast<std::size_t>(rng_data.uniform_int(sources.size()));
                    auto b = static_cast<std::size_t>(rng_data.uniform_int(sources.size() - 1));
                    if (b >= a) ++b;
                    return sample_two_domain_batch(ds, train_pool, sources[a], sources[b],
                                                   cfg.batch_size / 2, rng_data);
                }
                return sample_batch(ds, train_pool, cfg.sampler, cfg.batch_size, rng_data);
            }();
            out.sampled_indices.insert(out.sampled_indices.end(), batch.indices.begin(),
                                       batch.indices.end());
            if (cfg.baseline == BaselineKind::mixup_no_interp) mixup_no_interp(batch, rng_aug);

            std::vector<LayerTrace> traces;
            ForwardOptions opts;
            opts.training = true;
            opts.rng = &rng_aug;
            opts.traces = &traces;
            const Var logits = out.model.forward(batch.images, opts);
            const Var loss = softmax_cross_entropy(logits, batch.class_labels);
            if (!std::isfinite(loss->value[0])) throw DivergenceError(epoch);
            loss_sum += loss->value[0];
            for (const LayerTrace& t : traces) {
                GateCount& g = out.gating[t.layer];
                ++g.total;
                if (t.trace.activated) ++g.active;
            }

            const GradientMap grads = backward(loss);
            // Style mixing can scale gradients by gamma_mix/sigma, which gets
            // extreme when a channel's sigma sits near the eps floor; a
            // global-norm ceiling keeps such spikes from killing the run.
            double scale = 1.0;
            if (cfg.grad_clip > 0.0) {
                double sq = 0.0;
                for (const Var& p : params) {
                    const Tensor4& g = grads.at(p);
                    for (std::int64_t q = 0; q < g.size(); ++q) sq += g[q] * g[q];
                }
                const double norm = std::sqrt(sq);
                if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
            }
            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor4& w = params[i]->value;
                Tensor4& v = velocity[i];
                const Tensor4& g = grads.at(params[i]);
                const std::int64_t n = w.size();
                for (std::int64_t q = 0; q < n; ++q) {
                    v[q] = cfg.momentum * v[q] + scale * g[q] + cfg.weight_decay * w[q];
                    w[q] -= cfg.lr * v[q];
                }
            }
        }
        const double val_acc = evaluate(out.model, ds, val_pool);
        out.curve.push_back({epoch, loss_sum / steps_per_epoch, val_acc});
        out.final_val_acc = val_acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Leave-one-domain-out protocol and ablation arms

struct RunRecord {
    std::string arm;
    int target_domain = 0;
    std::uint64_t seed = 0;
    double accuracy = 0.0; // percent on the held-out domain's test split
    double wall_sec = 0.0;
    std::vector<CurvePoint> curve; // carried for curve export, not a CSV column
};

class ExperimentReport {
public:
    std::vector<RunRecord> runs;

    std::vector<std::string> arm_names() const {
        std::vector<std::string> out;
        for (const RunRecord& r : runs)
            if (std::find(out.begin(), out.end(), r.arm) == out.end()) out.push_back(r.arm);
        return out;
    }

    std::vector<int> targets(const std::string& arm) const {
        std::vector<int> out;
        for (const RunRecord& r : runs)
            if (r.arm == arm && std::find(out.begin(), out.end(), r.target_domain) == out.end())
                out.push_back(r.target_domain);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<double> seed_accuracies(const std::string& arm, int target) const {
        std::vector<double> out;
        for (const RunRecord& r : runs)
            if (r.arm == arm && r.target_domain == target) out.push_back(r.accuracy);
        return out;
    }

    double target_mean(const std::string& arm, int target) const {
        const std::vector<double> a = seed_accuracies(arm, target);
        if (a.empty()) throw ValueError("report: no runs for arm '" + arm + "'");
        double s = 0.0;
        for (double v : a) s += v;
        return s / static_cast<double>(a.size());
    }

    /// Mean over targets of per-target seed means (the Avg column).
    double arm_average(const std::string& arm) const {
        const std::vector<int> ts = targets(arm);
        if (ts.empty()) throw ValueError("report: no runs for arm '" + arm + "'");
        double s = 0.0;
        for (int t : ts) s += target_mean(arm, t);
        return s / static_cast<double>(ts.size());
    }

    /// Bitwise-stable CSV: one row per arm x target x seed, shortest
    /// round-trip formatting, no timing columns.
    std::string to_csv() const {
        std::ostringstream os;
        os << "arm,target_domain,seed,accuracy\n";
        os << std::setprecision(17);
        for (const RunRecord& r : runs)
            os << r.arm << "," << r.target_domain << "," << r.seed << "," << r.accuracy << "\n";
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json arms = nlohmann::json::object();
        for (const std::string& arm : arm_names()) {
            nlohmann::json targets_json = nlohmann::json::object();
            double wall = 0.0;
            for (int t : targets(arm)) {
                const std::vector<double> a = seed_accuracies(arm, t);
                double mean = 0.0;
                for (double v : a) mean += v;
                mean /= static_cast<double>(a.size());
                nlohmann::json entry = {{"mean", mean}};
                if (a.size() >= 2) {
                    double sq = 0.0;
                    for (double v : a) sq += (v - mean) * (v - mean);
                    entry["std"] = std::sqrt(sq / static_cast<double>(a.size() - 1));
                } else {
                    entry["std"] = nullptr;
                }
                entry["accuracies"] = a;
                targets_json[std::to_string(t)] = entry;
            }
            for (const RunRecord& r : runs)
                if (r.arm == arm) wall += r.wall_sec;
            arms[arm] = {{"targets", targets_json},
                         {"average", arm_average(arm)},
                         {"wall_sec", wall}};
        }
        return {{"arms", arms}};
    }
};

namespace detail {

template <typename Fn>
inline void parallel_for(std::size_t count, int jobs, Fn fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&, t] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                    return;
                }
            }
        });
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

/// Train on every domain but one, test on the held-out domain's test split,
/// for every (target, seed) pair. Runs may execute in parallel; each owns an
/// independent stream derived from (seed, target), so results do not depend
/// on `jobs` and arms sharing a seed list also share model initializations.
inline ExperimentReport run_lodo(const TrainConfig& base, const DomainDataset& ds,
                                 const std::vector<std::uint64_t>& seeds, int jobs = 1,
                                 const std::string& arm_name = "") {
    if (ds.domains < 3) throw ValueError("run_lodo: need at least 3 domains");
    if (seeds.empty()) throw ValueError("run_lodo: need at least one seed");
    const std::string arm = arm_name.empty() ? baseline_name(base.baseline) : arm_name;

    struct Job {
        int target;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    for (int target = 0; target < ds.domains; ++target)
        for (std::uint64_t s : seeds) work.push_back({target, s});

    ExperimentReport report;
    report.runs.resize(work.size());
    detail::parallel_for(work.size(), jobs, [&](std::size_t i) {
        const Job& job = work[i];
        std::vector<int> sources;
        for (int d = 0; d < ds.domains; ++d)
            if (d != job.target) sources.push_back(d);
        TrainConfig cfg = base;
        cfg.seed = seed_mix({job.seed, static_cast<std::uint64_t>(job.target)});
        const auto t0 = std::chrono::steady_clock::now();
        const TrainOutput res = train(cfg, ds, sources);
        const std::vector<int> test_idx = ds.split_indices(Split::test, {job.target});
        const double acc = evaluate(res.model, ds, test_idx);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.runs[i] = {arm, job.target, job.seed, acc, wall, res.curve};
    });
    return report;
}

enum class AblationKind {
    insertion,
    mix_vs_replace,
    shuffle_scope,
    alpha_sweep,
    same_domain,
    label_free_vs_label,
};

inline const char* ablation_name(AblationKind k) {
    switch (k) {
        case AblationKind::insertion: return "insertion";
        case AblationKind::mix_vs_replace: return "mix_vs_replace";
        case AblationKind::shuffle_scope: return "shuffle_scope";
        case AblationKind::alpha_sweep: return "alpha_sweep";
        case AblationKind::same_domain: return "same_domain";
        case AblationKind::label_free_vs_label: return "label_free_vs_label";
    }
    return "?";
}

struct AblationArm {
    std::string name;
    TrainConfig cfg;
};

inline std::vector<AblationArm> ablation_arms(AblationKind kind, const TrainConfig& base) {
    std::vector<AblationArm> arms;
    auto push = [&](const std::string& name, auto mutate) {
        TrainConfig cfg = base;
        cfg.baseline = BaselineKind::mixstyle;
        mutate(cfg);
        arms.push_back({name, cfg});
    };
    switch (kind) {
        case AblationKind::insertion: {
            const std::vector<std::pair<std::string, std::vector<std::string>>> masks = {
                {"none", {}},
                {"blk1", {"blk1"}},
                {"blk12", {"blk1", "blk2"}},
                {"blk123", {"blk1", "blk2", "blk3"}},
                {"blk1234", {"blk1", "blk2", "blk3", "blk4"}},
                {"blk14", {"blk1", "blk4"}},
                {"blk23", {"blk2", "blk3"}},
            };
            for (const auto& [name, mask] : masks)
                push(name, [mask = mask](TrainConfig& c) { c.classifier.insertion_mask = mask; });
            break;
        }
        case AblationKind::mix_vs_replace:
            push("mixing", [](TrainConfig& c) { c.classifier.mixstyle.mix_mode = MixMode::convex; });
            push("replacing",
                 [](TrainConfig& c) { c.classifier.mixstyle.mix_mode = MixMode::replace; });
            break;
        case AblationKind::shuffle_scope:
            push("per_layer", [](TrainConfig& c) {
                c.classifier.mixstyle.shuffle_scope = ShuffleScope::per_layer;
            });
            push("shared", [](TrainConfig& c) {
                c.classifier.mixstyle.shuffle_scope = ShuffleScope::shared;
            });
            break;
        case AblationKind::alpha_sweep:
            for (double a : {0.1, 0.2, 0.3, 0.5, 1.0}) {
                std::ostringstream name;
                name << "alpha_" << a;
                push(name.str(), [a](TrainConfig& c) { c.classifier.mixstyle.alpha = a; });
            }
            break;
        case AblationKind::same_domain:
            push("same_domain", [](TrainConfig& c) {
                c.sampler = SamplerMode::single_domain;
                c.classifier.mixstyle.perm_mode = PermMode::random_shuffle;
            });
            push("cross_domain", [](TrainConfig& c) {
                c.sampler = SamplerMode::mixed_domains;
                c.classifier.mixstyle.perm_mode = PermMode::random_shuffle;
            });
            break;
        case AblationKind::label_free_vs_label:
            push("random_shuffle", [](TrainConfig& c) {
                c.sampler = SamplerMode::mixed_domains;
                c.classifier.mixstyle.perm_mode = PermMode::random_shuffle;
            });
            push("domain_label", [](TrainConfig& c) {
                c.sampler = SamplerMode::two_domain;
                c.classifier.mixstyle.perm_mode = PermMode::domain_label;
            });
            break;
    }
    return arms;
}

/// Every arm runs the full LODO protocol on the same dataset and seed list,
/// so arms differ only in the knob under study.
inline ExperimentReport run_ablation(AblationKind kind, const TrainConfig& base,
                                     const DomainDataset& ds,
                                     const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    ExperimentReport report;
    for (const AblationArm& arm : ablation_arms(kind, base)) {
        ExperimentReport part = run_lodo(arm.cfg, ds, seeds, jobs, arm.name);
        report.runs.insert(report.runs.end(), part.runs.begin(), part.runs.end());
    }
    return report;
}

} // namespace stylemix
