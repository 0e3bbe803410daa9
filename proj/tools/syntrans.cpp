// syntrans: multimodal few-shot pipeline over precomputed embedding banks.
//
// Stages: synth-data -> distill -> mine -> bridge -> fuse -> eval, plus
// sweep-alpha and dump-weights. Every stage output is content-addressed by a
// hash of the config that produced it, so stale artifacts are reported as
// missing instead of silently reused.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "run_config.hpp"
#include "syntrans/fusion.hpp"

using namespace syntrans;
using nlohmann::json;

namespace {

struct Context {
    cli::RunConfig config;
    cli::StageHashes hashes;
    cli::ArtifactPaths paths;
    unsigned workers = 1;
};

void require_artifact(const std::filesystem::path& path, const char* producer) {
    if (!std::filesystem::exists(path)) {
        throw Error(Errc::MissingArtifact,
                    path.string() + " (run `syntrans " + producer +
                        "` with this config first)");
    }
}

data::DatasetSplit load_split_checked(const Context& ctx) {
    require_artifact(ctx.paths.split, "synth-data");
    return data::load_split(ctx.paths.split);
}

std::vector<std::uint32_t> sorted_base_ids(const data::DatasetSplit& split) {
    std::vector<std::uint32_t> ids = split.base;
    std::sort(ids.begin(), ids.end());
    return ids;
}

distill::Stage1Model load_stage1_checked(const Context& ctx, const data::DatasetSplit& split) {
    require_artifact(ctx.paths.stage1_checkpoint, "distill");
    const auto dcfg = cli::distill_config(ctx.config);
    return distill::load_stage1(ctx.paths.stage1_checkpoint, dcfg.projector_relu,
                                dcfg.classifier_scale, sorted_base_ids(split));
}

synmine::SemanticDescriptorSet load_descriptors_checked(const Context& ctx) {
    require_artifact(ctx.paths.description_cache, "mine");
    require_artifact(ctx.paths.teacher_text_bank, "synth-data");
    const auto texts = synmine::load_description_cache(ctx.paths.description_cache);
    const auto text_bank = data::load_bank(ctx.paths.teacher_text_bank);
    return synmine::attach_descriptors(texts, text_bank);
}

int cmd_synth_data(const Context& ctx) {
    const auto spec = cli::synth_spec(ctx.config);
    const std::size_t base_count = cli::synth_base_categories(ctx.config);
    if (base_count == 0 || base_count >= spec.num_categories) {
        throw Error(Errc::ConfigInvalid, "synth.base_categories must split the categories");
    }
    const auto synth = data::generate_synthetic(spec);

    std::filesystem::create_directories(ctx.config.out_dir());
    data::save_bank(synth.student_visual, ctx.paths.student_bank);
    data::save_bank(synth.teacher_visual, ctx.paths.teacher_visual_bank);
    data::save_bank(synth.teacher_text, ctx.paths.teacher_text_bank);

    data::DatasetSplit split;
    for (std::uint32_t id = 0; id < spec.num_categories; ++id) {
        (id < base_count ? split.base : split.novel).push_back(id);
    }
    data::save_split(split, ctx.paths.split);

    std::cout << "wrote banks (" << synth.student_visual.num_rows() << " samples, "
              << spec.num_categories << " categories) and split to "
              << ctx.config.out_dir().string() << "\n";
    return 0;
}

int cmd_distill(const Context& ctx) {
    require_artifact(ctx.paths.student_bank, "synth-data");
    require_artifact(ctx.paths.teacher_visual_bank, "synth-data");
    require_artifact(ctx.paths.teacher_text_bank, "synth-data");
    const auto split = load_split_checked(ctx);
    const auto student = data::load_bank(ctx.paths.student_bank);
    const auto teacher_visual = data::load_bank(ctx.paths.teacher_visual_bank);
    const auto teacher_text = data::load_bank(ctx.paths.teacher_text_bank);

    const auto result = distill::train_stage1(student, teacher_visual, teacher_text, split,
                                              cli::distill_config(ctx.config),
                                              ctx.paths.stage1_checkpoint);
    std::cout << "stage1 trained: final ce=" << result.epoch_ce.back()
              << " kd=" << result.epoch_kd.back() << " -> "
              << ctx.paths.stage1_checkpoint.string() << "\n";
    return 0;
}

int cmd_mine(const Context& ctx) {
    require_artifact(ctx.paths.teacher_text_bank, "synth-data");
    const auto text_bank = data::load_bank(ctx.paths.teacher_text_bank);
    const auto provider_cfg = cli::provider_config(ctx.config);
    const auto provider = synmine::make_provider(provider_cfg);

    std::filesystem::create_directories(ctx.paths.description_cache.parent_path());
    const auto mined = synmine::mine_descriptions(text_bank.categories(), *provider,
                                                  ctx.paths.description_cache,
                                                  provider_cfg.max_in_flight);
    std::cout << "mined " << mined.size() << " descriptions via " << provider->id() << " -> "
              << ctx.paths.description_cache.string() << "\n";
    return 0;
}

int cmd_bridge(const Context& ctx) {
    const auto split = load_split_checked(ctx);
    const auto stage1 = load_stage1_checked(ctx, split);
    const auto descriptors = load_descriptors_checked(ctx);

    const auto pairs = vsbird::make_pairset(stage1.classifier, descriptors);
    std::vector<double> losses;
    const auto model = vsbird::train_bridge(pairs, cli::bridge_config(ctx.config), &losses);
    vsbird::save_bridge(model, ctx.paths.bridge_checkpoint);
    std::cout << "bridge trained: final loss=" << losses.back() << " -> "
              << ctx.paths.bridge_checkpoint.string() << "\n";
    return 0;
}

int cmd_fuse(const Context& ctx) {
    require_artifact(ctx.paths.student_bank, "synth-data");
    const auto split = load_split_checked(ctx);
    const auto student = data::load_bank(ctx.paths.student_bank);
    const auto stage1 = load_stage1_checked(ctx, split);
    const auto descriptors = load_descriptors_checked(ctx);
    require_artifact(ctx.paths.bridge_checkpoint, "bridge");
    const auto bridge = vsbird::load_bridge(ctx.paths.bridge_checkpoint);

    fusion::MetaTrainStats stats;
    const auto heads = fusion::meta_train(student, split.base, descriptors, bridge,
                                          stage1.projector, cli::fusion_config(ctx.config),
                                          &stats);
    fusion::save_heads(heads, ctx.paths.fusion_checkpoint);
    std::cout << "fusion heads trained: final loss=" << stats.epoch_loss.back()
              << " fused_acc=" << stats.epoch_fused_accuracy.back()
              << " proto_acc=" << stats.epoch_proto_accuracy.back() << " -> "
              << ctx.paths.fusion_checkpoint.string() << "\n";
    return 0;
}

json eval_to_json(const fusion::EvalResult& result, const std::string& config_hash) {
    json j;
    j["n"] = result.n_way;
    j["k"] = result.k_shot;
    j["q"] = result.q_queries;
    j["episodes"] = result.episodes;
    j["seed"] = result.seed;
    j["lambda"] = result.lambda;
    j["mean_acc"] = result.mean_accuracy;
    j["ci95"] = result.ci95;
    j["baseline_mean_acc"] = result.baseline_mean_accuracy;
    j["baseline_ci95"] = result.baseline_ci95;
    j["wv_mean_acc"] = result.wv_mean_accuracy;
    j["wv_ci95"] = result.wv_ci95;
    j["per_episode"] = result.per_episode;
    j["per_episode_baseline"] = result.per_episode_baseline;
    j["per_episode_wv"] = result.per_episode_wv;
    j["config_hash"] = config_hash;
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw Error(Errc::MissingArtifact, "cannot write " + path.string());
    }
    out << text;
}

fusion::EvalResult run_eval(const Context& ctx, bool write_outputs) {
    require_artifact(ctx.paths.student_bank, "synth-data");
    const auto split = load_split_checked(ctx);
    const auto student = data::load_bank(ctx.paths.student_bank);
    const auto stage1 = load_stage1_checked(ctx, split);
    const auto descriptors = load_descriptors_checked(ctx);
    require_artifact(ctx.paths.bridge_checkpoint, "bridge");
    const auto bridge = vsbird::load_bridge(ctx.paths.bridge_checkpoint);
    require_artifact(ctx.paths.fusion_checkpoint, "fuse");
    const auto heads = fusion::load_heads(ctx.paths.fusion_checkpoint);

    const auto settings = cli::eval_settings(ctx.config);
    const auto result = fusion::evaluate(student, split.novel, descriptors, bridge, heads,
                                         stage1.projector, settings.n_way, settings.k_shot,
                                         settings.q_queries, settings.episodes,
                                         ctx.config.seed(), settings.lambda, settings.raw_dot,
                                         ctx.workers);
    if (write_outputs) {
        write_text(ctx.paths.eval_report, eval_to_json(result, ctx.hashes.eval).dump(2) + "\n");
        if (ctx.config.get_bool("eval", "csv", false)) {
            std::string csv = "episode,accuracy,baseline\n";
            for (std::size_t i = 0; i < result.per_episode.size(); ++i) {
                char line[96];
                std::snprintf(line, sizeof(line), "%zu,%.10f,%.10f\n", i, result.per_episode[i],
                              result.per_episode_baseline[i]);
                csv += line;
            }
            write_text(ctx.paths.eval_csv, csv);
        }
    }
    return result;
}

int cmd_eval(const Context& ctx) {
    const auto result = run_eval(ctx, /*write_outputs=*/true);
    std::printf(
        "%zu-way %zu-shot over %zu episodes: fused %.2f%% ± %.2f | prototypes %.2f%% ± %.2f\n",
        result.n_way, result.k_shot, result.episodes, result.mean_accuracy, result.ci95,
        result.baseline_mean_accuracy, result.baseline_ci95);
    std::cout << "report: " << ctx.paths.eval_report.string() << "\n";
    return 0;
}

int cmd_sweep_alpha(const Context& ctx) {
    const auto alphas = cli::sweep_alphas(ctx.config);
    json rows = json::array();
    std::printf("%8s %10s %9s %12s %14s\n", "alpha", "wv_acc", "wv_ci95", "fused_acc",
                "baseline_acc");
    for (const double alpha : alphas) {
        Context variant = ctx;
        char formatted[32];
        std::snprintf(formatted, sizeof(formatted), "%.6g", alpha);
        variant.config.apply_override("bridge.alpha", formatted);
        variant.hashes = cli::stage_hashes(variant.config);
        variant.paths = cli::artifact_paths(variant.config, variant.hashes);

        // bridge + fusion heads are retrained per grid point so the heads are
        // calibrated against the bridge they are evaluated with
        {
            const auto split = load_split_checked(variant);
            const auto stage1 = load_stage1_checked(variant, split);
            const auto descriptors = load_descriptors_checked(variant);
            const auto pairs = vsbird::make_pairset(stage1.classifier, descriptors);
            const auto model = vsbird::train_bridge(pairs, cli::bridge_config(variant.config));
            vsbird::save_bridge(model, variant.paths.bridge_checkpoint);

            const auto student = data::load_bank(variant.paths.student_bank);
            const auto heads = fusion::meta_train(student, split.base, descriptors, model,
                                                  stage1.projector,
                                                  cli::fusion_config(variant.config));
            fusion::save_heads(heads, variant.paths.fusion_checkpoint);
        }
        const auto result = run_eval(variant, /*write_outputs=*/true);
        std::printf("%8.2f %9.2f%% %8.2f%% %11.2f%% %13.2f%%\n", alpha, result.wv_mean_accuracy,
                    result.wv_ci95, result.mean_accuracy, result.baseline_mean_accuracy);
        json row;
        row["alpha"] = alpha;
        row["wv_mean_acc"] = result.wv_mean_accuracy;
        row["wv_ci95"] = result.wv_ci95;
        row["mean_acc"] = result.mean_accuracy;
        row["ci95"] = result.ci95;
        row["baseline_mean_acc"] = result.baseline_mean_accuracy;
        row["baseline_ci95"] = result.baseline_ci95;
        rows.push_back(row);
    }
    json report;
    report["alphas"] = rows;
    report["seed"] = ctx.config.seed();
    std::filesystem::create_directories(ctx.config.out_dir());
    write_text(ctx.paths.sweep_report, report.dump(2) + "\n");
    std::cout << "sweep report: " << ctx.paths.sweep_report.string() << "\n";
    return 0;
}

int cmd_dump_weights(const Context& ctx) {
    require_artifact(ctx.paths.student_bank, "synth-data");
    const auto split = load_split_checked(ctx);
    const auto student = data::load_bank(ctx.paths.student_bank);
    const auto stage1 = load_stage1_checked(ctx, split);
    const auto descriptors = load_descriptors_checked(ctx);
    require_artifact(ctx.paths.bridge_checkpoint, "bridge");
    const auto bridge = vsbird::load_bridge(ctx.paths.bridge_checkpoint);
    require_artifact(ctx.paths.fusion_checkpoint, "fuse");
    const auto heads = fusion::load_heads(ctx.paths.fusion_checkpoint);
    const auto settings = cli::eval_settings(ctx.config);

    // one N=all-novel episode with K support shots per category
    const auto episode = data::sample_episode(student, split.novel, split.novel.size(),
                                              settings.k_shot, 1, ctx.config.seed());
    std::vector<std::vector<num::Vector>> support(episode.n_way);
    std::vector<num::Vector> descriptor_vec(episode.n_way);
    for (const auto& [row, label] : episode.support) {
        support[label].push_back(student.row(row));
    }
    for (std::size_t m = 0; m < episode.n_way; ++m) {
        descriptor_vec[m] = descriptors.by_id(episode.category_ids[m]).vector;
    }
    const double lambda = settings.lambda > 0.0
                              ? settings.lambda
                              : 1.0 / static_cast<double>(settings.k_shot);
    const auto clf = fusion::build_classifier(support, descriptor_vec, bridge, heads, lambda);

    std::vector<data::CategoryInfo> cats;
    std::vector<std::uint32_t> labels;
    std::vector<float> visual_payload, semantic_payload;
    for (std::size_t m = 0; m < episode.n_way; ++m) {
        cats.push_back(student.category(episode.category_ids[m]));
        labels.push_back(episode.category_ids[m]);
        for (double v : clf.visual_weights[m]) visual_payload.push_back(static_cast<float>(v));
        for (double v : clf.semantic_weights[m]) semantic_payload.push_back(static_cast<float>(v));
    }
    const data::EmbeddingBank visual_bank(data::BankSource::student_visual,
                                          clf.visual_weights.front().size(), cats, labels,
                                          visual_payload);
    const data::EmbeddingBank semantic_bank(data::BankSource::teacher_text,
                                            clf.semantic_weights.front().size(), cats, labels,
                                            semantic_payload);
    const auto visual_path = ctx.config.out_dir() / ("weights_wv-" + ctx.hashes.fuse + ".synb");
    const auto semantic_path = ctx.config.out_dir() / ("weights_ws-" + ctx.hashes.fuse + ".synb");
    data::save_bank(visual_bank, visual_path);
    data::save_bank(semantic_bank, semantic_path);
    std::cout << "dumped " << episode.n_way << " fused weight vectors per space to "
              << visual_path.string() << " and " << semantic_path.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal few-shot classifier pipeline over embedding banks"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    unsigned workers = 1;
    std::vector<std::string> overrides;

    app.add_option("--config", config_path, "path to the INI run config")->required();
    auto* seed_opt = app.add_option("--seed", seed_override, "override the global seed");
    app.add_option("--workers", workers, "worker threads for evaluation")
        ->check(CLI::Range(1u, 64u));
    app.add_option("--set", overrides, "override config keys (section.key=value)");

    app.add_subcommand("synth-data", "generate synthetic embedding banks and a split");
    app.add_subcommand("distill", "train the projector and cosine classifier");
    app.add_subcommand("mine", "generate class descriptions via the text provider");
    app.add_subcommand("bridge", "train the visual-semantic dual autoencoder");
    app.add_subcommand("fuse", "meta-train the fusion heads");
    app.add_subcommand("eval", "episodic evaluation on the novel split");
    app.add_subcommand("sweep-alpha", "bridge+fuse+eval across an alpha grid");
    app.add_subcommand("dump-weights", "emit fused novel-category weights as banks");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    try {
        Context ctx;
        ctx.config = cli::RunConfig::from_file(config_path);
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw Error(Errc::ConfigInvalid, "--set expects section.key=value, got " + kv);
            }
            ctx.config.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_set) {
            ctx.config.set_seed(seed_override);
        }
        ctx.hashes = cli::stage_hashes(ctx.config);
        ctx.paths = cli::artifact_paths(ctx.config, ctx.hashes);
        ctx.workers = workers;

        if (app.got_subcommand("synth-data")) return cmd_synth_data(ctx);
        if (app.got_subcommand("distill")) return cmd_distill(ctx);
        if (app.got_subcommand("mine")) return cmd_mine(ctx);
        if (app.got_subcommand("bridge")) return cmd_bridge(ctx);
        if (app.got_subcommand("fuse")) return cmd_fuse(ctx);
        if (app.got_subcommand("eval")) return cmd_eval(ctx);
        if (app.got_subcommand("sweep-alpha")) return cmd_sweep_alpha(ctx);
        if (app.got_subcommand("dump-weights")) return cmd_dump_weights(ctx);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << "\n";
        return 1;
    }
}
