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

// Command-line front end: dataset generation, training, the leave-one-domain-
// out protocol, ablations and style-statistics analysis, all driven by one
// JSON config with dotted-key overrides. Every run writes a manifest first;
// re-running `--config manifest.json` reproduces the reports exactly.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stylemix/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string seeds_csv;
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (or a manifest.json)");
    cmd->add_option("--set", args.overrides, "dotted-key override, e.g. mixstyle.alpha=0.3");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "single seed");
    cmd->add_option("--seeds", args.seeds_csv, "comma-separated seed list")
        ->excludes("--seed");
    cmd->add_option("--jobs", args.jobs, "parallel (target, seed) runs")
        ->check(CLI::PositiveNumber);
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw stylemix::ConfigError("--seeds", "'" + item + "' is not a seed");
        }
    }
    if (out.empty()) throw stylemix::ConfigError("--seeds", "empty seed list");
    return out;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

fs::path resolve_out_dir(const CommonArgs& args, const std::string& subcommand) {
    if (!args.out_dir.empty()) return fs::path(args.out_dir);
    const char* root = std::getenv("STYLEMIX_OUT");
    return fs::path(root != nullptr ? root : "runs") / subcommand;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw stylemix::IoError("cannot open " + path.string());
    os << text;
    if (!os) throw stylemix::IoError("write failed for " + path.string());
}

struct RunContext {
    fs::path out;
    json manifest;
    fs::path manifest_path;
};

RunContext begin_run(const std::string& subcommand, const CommonArgs& args,
                     const stylemix::ResolvedConfig& cfg,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<std::string>& artifacts) {
    RunContext ctx;
    ctx.out = resolve_out_dir(args, subcommand);
    fs::create_directories(ctx.out);
    ctx.manifest = {{"tool", "stylemix"},
                    {"version", stylemix::kToolVersion},
                    {"subcommand", subcommand},
                    {"seeds", seeds},
                    {"jobs", args.jobs},
                    {"config", cfg.resolved},
                    {"start_time", iso_now()},
                    {"end_time", nullptr},
                    {"artifacts", artifacts}};
    ctx.manifest_path = ctx.out / "manifest.json";
    write_text(ctx.manifest_path, ctx.manifest.dump(2) + "\n");
    return ctx;
}

void finish_run(RunContext& ctx) {
    ctx.manifest["end_time"] = iso_now();
    write_text(ctx.manifest_path, ctx.manifest.dump(2) + "\n");
}

std::string curve_csv(const std::vector<stylemix::CurvePoint>& curve) {
    std::ostringstream os;
    os << "epoch,train_loss,val_acc\n" << std::setprecision(17);
    for (const auto& p : curve) os << p.epoch << "," << p.train_loss << "," << p.val_acc << "\n";
    return os.str();
}

void write_report(const RunContext& ctx, const stylemix::ExperimentReport& report) {
    write_text(ctx.out / "report.csv", report.to_csv());
    json full = report.to_json();
    full["config"] = ctx.manifest.at("config");
    full["seeds"] = ctx.manifest.at("seeds");
    write_text(ctx.out / "report.json", full.dump(2) + "\n");
    for (const stylemix::RunRecord& r : report.runs) {
        const std::string name =
            r.arm + "-t" + std::to_string(r.target_domain) + "-s" + std::to_string(r.seed) + ".csv";
        write_text(ctx.out / "curves" / name, curve_csv(r.curve));
    }
}

std::pair<stylemix::ResolvedConfig, std::vector<std::uint64_t>>
load_and_resolve(const CommonArgs& args) {
    json user = json::object();
    std::optional<std::vector<std::uint64_t>> manifest_seeds;
    if (!args.config_path.empty()) {
        auto [loaded, seeds] = stylemix::load_config_file(args.config_path);
        user = std::move(loaded);
        manifest_seeds = std::move(seeds);
    }
    for (const std::string& o : args.overrides) stylemix::apply_override(user, o);
    stylemix::ResolvedConfig cfg = stylemix::resolve_config(user);

    std::vector<std::uint64_t> seeds{1};
    if (manifest_seeds.has_value()) seeds = *manifest_seeds;
    if (args.seed.has_value()) seeds = {*args.seed};
    if (!args.seeds_csv.empty()) seeds = parse_seeds(args.seeds_csv);
    return {std::move(cfg), std::move(seeds)};
}

int cmd_gen_data(const CommonArgs& args) {
    auto [cfg, seeds] = load_and_resolve(args);
    RunContext ctx = begin_run("gen-data", args, cfg, seeds,
                               {"dataset.smld", "dataset.smld.json"});
    const stylemix::DomainDataset ds = stylemix::generate_dataset(cfg.dataset);
    stylemix::save_dataset(ds, (ctx.out / "dataset.smld").string());
    std::cout << "wrote " << (ctx.out / "dataset.smld").string() << " (" << ds.count()
              << " images, " << ds.classes << " classes, " << ds.domains << " domains)\n";
    finish_run(ctx);
    return 0;
}

int cmd_train(const CommonArgs& args) {
    auto [cfg, seeds] = load_and_resolve(args);
    RunContext ctx = begin_run("train", args, cfg, seeds,
                               {"model.ckpt", "curves/train.csv", "report.json"});
    const stylemix::DomainDataset ds = stylemix::open_dataset(cfg);
    stylemix::TrainConfig tc = cfg.train;
    tc.seed = seeds.front();
    const stylemix::TrainOutput res = stylemix::train(tc, ds, {});
    res.model.save((ctx.out / "model.ckpt").string());
    write_text(ctx.out / "curves" / "train.csv", curve_csv(res.curve));
    json gating = json::object();
    for (const auto& [layer, g] : res.gating)
        gating[layer] = {{"active", g.active}, {"total", g.total}, {"fraction", g.fraction()}};
    const json report = {{"baseline", stylemix::baseline_name(tc.baseline)},
                         {"seed", tc.seed},
                         {"final_val_acc", res.final_val_acc},
                         {"gating", gating}};
    write_text(ctx.out / "report.json", report.dump(2) + "\n");
    std::cout << "final source-validation accuracy: " << res.final_val_acc << "%\n";
    finish_run(ctx);
    return 0;
}

int cmd_lodo(const CommonArgs& args) {
    auto [cfg, seeds] = load_and_resolve(args);
    RunContext ctx = begin_run("lodo", args, cfg, seeds, {"report.csv", "report.json"});
    const stylemix::DomainDataset ds = stylemix::open_dataset(cfg);
    const stylemix::ExperimentReport report =
        stylemix::run_lodo(cfg.train, ds, seeds, args.jobs);
    write_report(ctx, report);
    for (const std::string& arm : report.arm_names())
        std::cout << arm << " average: " << report.arm_average(arm) << "%\n";
    finish_run(ctx);
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    auto [cfg, seeds] = load_and_resolve(args);
    RunContext ctx = begin_run("ablate", args, cfg, seeds, {"report.csv", "report.json"});
    const stylemix::DomainDataset ds = stylemix::open_dataset(cfg);
    const stylemix::ExperimentReport report =
        stylemix::run_ablation(cfg.ablation, cfg.train, ds, seeds, args.jobs);
    write_report(ctx, report);
    std::cout << stylemix::ablation_name(cfg.ablation) << " ablation:\n";
    for (const std::string& arm : report.arm_names())
        std::cout << "  " << arm << ": " << report.arm_average(arm) << "%\n";
    finish_run(ctx);
    return 0;
}

int cmd_analyze(const CommonArgs& args, const std::string& model_path) {
    auto [cfg, seeds] = load_and_resolve(args);
    RunContext ctx = begin_run("analyze", args, cfg, seeds, {"report.json", "stats/"});
    const stylemix::DomainDataset ds = stylemix::open_dataset(cfg);
    const stylemix::Model model = stylemix::Model::load(model_path);
    const std::vector<int> indices = ds.split_indices(stylemix::Split::val);
    json scores = json::object();
    for (const std::string& layer : cfg.analysis_layers) {
        const stylemix::StyleEmbedding emb =
            stylemix::collect_style_stats(model, ds, indices, layer);
        const stylemix::ProjectionResult proj = stylemix::project_and_score(emb);
        std::ostringstream os;
        os << "pc1,pc2,domain,class\n" << std::setprecision(17);
        for (std::size_t i = 0; i < proj.coords.size(); ++i)
            os << proj.coords[i][0] << "," << proj.coords[i][1] << ","
               << emb.domain_labels[i] << "," << emb.class_labels[i] << "\n";
        write_text(ctx.out / "stats" / (layer + ".csv"), os.str());
        scores[layer] = {{"domain_silhouette", proj.domain_silhouette},
                         {"class_silhouette", proj.class_silhouette}};
        std::cout << layer << ": domain silhouette " << proj.domain_silhouette
                  << ", class silhouette " << proj.class_silhouette << "\n";
    }
    write_text(ctx.out / "report.json", json{{"layers", scores}}.dump(2) + "\n");
    finish_run(ctx);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-statistics mixing for domain generalization, desk-scale harness"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string model_path;
    CLI::App* gen = app.add_subcommand("gen-data", "generate and export a synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train a single model on all domains");
    CLI::App* lodo = app.add_subcommand("lodo", "leave-one-domain-out protocol");
    CLI::App* ablate = app.add_subcommand("ablate", "run the configured ablation");
    CLI::App* analyze = app.add_subcommand("analyze", "style-statistics separability analysis");
    for (CLI::App* cmd : {gen, train, lodo, ablate, analyze}) add_common(cmd, args);
    analyze->add_option("--model", model_path, "checkpoint to analyze")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args);
        if (lodo->parsed()) return cmd_lodo(args);
        if (ablate->parsed()) return cmd_ablate(args);
        if (analyze->parsed()) return cmd_analyze(args, model_path);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const stylemix::ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
