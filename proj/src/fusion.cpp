#include "syntrans/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "syntrans/checkpoint.hpp"
#include "syntrans/rng.hpp"

namespace syntrans::fusion {

namespace {

constexpr std::uint64_t kGateStream = 0x30;
constexpr std::uint64_t kRecon1Stream = 0x31;
constexpr std::uint64_t kRecon2Stream = 0x32;
constexpr std::uint64_t kEpisodeStreamBase = 0x200000;

num::Vector concat(const num::Vector& a, const num::Vector& b) {
    num::Vector out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

double resolve_lambda(double lambda, std::size_t k_shot) {
    if (lambda > 0.0) return lambda;
    return 1.0 / static_cast<double>(k_shot);
}

} // namespace

num::Vector compute_prototype(const std::vector<num::Vector>& support_features) {
    if (support_features.empty()) {
        throw Error(Errc::InsufficientSamples, "prototype needs at least one support feature");
    }
    num::Vector sum(support_features.front().size(), 0.0);
    for (const auto& f : support_features) {
        num::axpy(sum, 1.0, f);
    }
    try {
        return num::l2_normalize(sum);
    } catch (const Error& e) {
        if (e.code() == Errc::ZeroNorm) {
            throw Error(Errc::ZeroNorm, "support features cancel out; prototype undefined");
        }
        throw;
    }
}

double gate_coefficient(const FusionHeads& heads, const num::Vector& semantic_derived) {
    const num::Vector out = heads.gate.apply(semantic_derived, nn::Activation::sigmoid());
    // keep the coefficient strictly inside (0,1) even when the sigmoid
    // saturates past double precision
    return std::clamp(out[0], 1e-12, 1.0 - 1e-12);
}

num::Vector visual_dominated_weight(double beta, const num::Vector& semantic_derived,
                                    const num::Vector& prototype) {
    if (semantic_derived.size() != prototype.size()) {
        throw Error(Errc::DimMismatch, "visual_dominated_weight: operand dims differ");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw Error(Errc::ConfigInvalid, "beta must lie in [0,1]");
    }
    num::Vector combo(prototype.size());
    for (std::size_t i = 0; i < combo.size(); ++i) {
        combo[i] = beta * semantic_derived[i] + (1.0 - beta) * prototype[i];
    }
    return num::l2_normalize(combo);
}

num::Vector semantic_dominated_weight(const FusionHeads& heads, const num::Vector& descriptor,
                                      const num::Vector& visual_derived) {
    if (descriptor.size() != visual_derived.size()) {
        throw Error(Errc::DimMismatch, "semantic_dominated_weight: operand dims differ");
    }
    const num::Vector joint = concat(descriptor, visual_derived);
    if (joint.size() != heads.recon1.in_dim()) {
        throw Error(Errc::DimMismatch, "semantic_dominated_weight: reconstructor expects dim " +
                                           std::to_string(heads.recon1.in_dim()));
    }
    const num::Vector hidden =
        heads.recon1.apply(joint, nn::Activation::leaky_relu(heads.leaky_slope));
    const num::Vector raw = heads.recon2.apply(hidden, nn::Activation::identity());
    try {
        return num::l2_normalize(raw);
    } catch (const Error& e) {
        if (e.code() == Errc::ZeroNorm) {
            throw Error(Errc::ZeroNorm, "reconstructor output collapsed to zero");
        }
        throw;
    }
}

FusionHeads init_heads(std::size_t visual_dim, std::size_t semantic_dim, std::size_t hidden_dim,
                       std::uint64_t seed) {
    FusionHeads heads;
    heads.gate =
        nn::AffineLayer::random_init(visual_dim, 1, rng::derive_stream(seed, kGateStream));
    heads.recon1 = nn::AffineLayer::random_init(2 * semantic_dim, hidden_dim,
                                                rng::derive_stream(seed, kRecon1Stream));
    heads.recon2 = nn::AffineLayer::random_init(hidden_dim, semantic_dim,
                                                rng::derive_stream(seed, kRecon2Stream));
    return heads;
}

MultimodalClassifier build_classifier(const std::vector<std::vector<num::Vector>>& support_by_class,
                                      const std::vector<num::Vector>& descriptors,
                                      const vsbird::DualAutoencoder& bridge,
                                      const FusionHeads& heads, double lambda) {
    if (support_by_class.size() != descriptors.size()) {
        throw Error(Errc::ShapeMismatch, "support classes and descriptors differ in count");
    }
    MultimodalClassifier clf;
    clf.lambda = lambda;
    for (std::size_t m = 0; m < support_by_class.size(); ++m) {
        const num::Vector prototype = compute_prototype(support_by_class[m]);
        const num::Vector semantic_derived = vsbird::semantic_to_weight(bridge, descriptors[m]);
        const num::Vector visual_derived = vsbird::visual_to_semantic(bridge, prototype);
        const double beta = gate_coefficient(heads, semantic_derived);
        clf.visual_weights.push_back(visual_dominated_weight(beta, semantic_derived, prototype));
        clf.semantic_weights.push_back(
            semantic_dominated_weight(heads, descriptors[m], visual_derived));
    }
    return clf;
}

std::pair<num::ProbabilityVector, num::ProbabilityVector> episode_probabilities(
    const MultimodalClassifier& classifier, const num::Vector& query_feature,
    const distill::Projector& projector) {
    const std::size_t n = classifier.visual_weights.size();
    const num::Vector projected = projector.apply(query_feature);
    num::Vector visual_scores(n);
    num::Vector semantic_scores(n);
    for (std::size_t m = 0; m < n; ++m) {
        visual_scores[m] = num::cosine_similarity(query_feature, classifier.visual_weights[m]);
        semantic_scores[m] = num::cosine_similarity(projected, classifier.semantic_weights[m]);
    }
    return {num::softmax(visual_scores, 1.0), num::softmax(semantic_scores, 1.0)};
}

std::size_t fused_predict(const MultimodalClassifier& classifier, const num::Vector& query_feature,
                          const distill::Projector& projector, double lambda, bool raw_dot) {
    if (!(lambda > 0.0)) {
        throw Error(Errc::ConfigInvalid, "lambda must be positive");
    }
    const std::size_t n = classifier.visual_weights.size();
    const num::Vector projected = projector.apply(query_feature);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m) {
        double visual_score, semantic_score;
        if (raw_dot) {
            visual_score = num::dot(query_feature, classifier.visual_weights[m]);
            semantic_score = num::dot(projected, classifier.semantic_weights[m]);
        } else {
            visual_score = num::cosine_similarity(query_feature, classifier.visual_weights[m]);
            semantic_score = num::cosine_similarity(projected, classifier.semantic_weights[m]);
        }
        const double score = visual_score + lambda * semantic_score;
        if (score > best_score) {
            best_score = score;
            best = m;
        }
    }
    return best;
}

FusionHeads meta_train(const data::EmbeddingBank& student_visual,
                       const std::vector<std::uint32_t>& base_ids,
                       const synmine::SemanticDescriptorSet& descriptors,
                       const vsbird::DualAutoencoder& bridge, const distill::Projector& projector,
                       const FusionConfig& config, MetaTrainStats* stats) {
    if (base_ids.empty()) {
        throw Error(Errc::InsufficientCategories, "meta_train: base split is empty");
    }
    for (std::uint32_t id : base_ids) {
        if (!descriptors.has(id)) {
            throw Error(Errc::MissingDescriptor,
                        "meta_train: no descriptor for base category " + std::to_string(id));
        }
    }
    const std::size_t d_v = student_visual.dim();
    const std::size_t d_s = descriptors.dim();

    FusionHeads heads = init_heads(d_v, d_s, config.hidden_dim, config.seed);

    nn::AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;
    adam_cfg.weight_decay = config.weight_decay;
    nn::Adam adam(adam_cfg);
    adam.add_layer(heads.gate);
    adam.add_layer(heads.recon1);
    adam.add_layer(heads.recon2);

    const double lambda = resolve_lambda(config.lambda, config.k_shot);
    const auto sigmoid = nn::Activation::sigmoid();
    const auto leaky = nn::Activation::leaky_relu(heads.leaky_slope);
    const auto ident = nn::Activation::identity();

    for (std::size_t epoch = 0; epoch < config.meta_epochs; ++epoch) {
        if (config.cosine_lr) {
            const double frac =
                static_cast<double>(epoch) / static_cast<double>(config.meta_epochs);
            adam.set_lr(std::max(config.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac)),
                                 1e-12));
        }
        double loss_sum = 0.0;
        std::size_t query_count = 0;
        std::size_t fused_correct = 0;
        std::size_t proto_correct = 0;

        for (std::size_t e = 0; e < config.episodes_per_epoch; ++e) {
            const std::uint64_t stream = rng::derive_stream(
                config.seed, kEpisodeStreamBase + epoch * config.episodes_per_epoch + e);
            const auto episode = data::sample_episode(student_visual, base_ids, config.n_way,
                                                      config.k_shot, config.q_queries, stream);
            const std::size_t n = episode.n_way;

            // per-class inputs; bridge outputs are constants for the heads
            std::vector<num::Vector> prototypes(n);
            std::vector<num::Vector> semantic_derived(n);
            std::vector<num::Vector> visual_derived(n);
            std::vector<num::Vector> descriptor_vec(n);
            {
                std::vector<std::vector<num::Vector>> support(n);
                for (const auto& [row, label] : episode.support) {
                    support[label].push_back(student_visual.row(row));
                }
                for (std::size_t m = 0; m < n; ++m) {
                    prototypes[m] = compute_prototype(support[m]);
                    descriptor_vec[m] = descriptors.by_id(episode.category_ids[m]).vector;
                    semantic_derived[m] = vsbird::semantic_to_weight(bridge, descriptor_vec[m]);
                    visual_derived[m] = vsbird::visual_to_semantic(bridge, prototypes[m]);
                }
            }

            // forward: build the episode classifier, keeping pre-normalization
            // intermediates for the backward pass
            std::vector<double> beta(n);
            std::vector<num::Vector> combos(n), visual_w(n);
            std::vector<num::Vector> joints(n), hiddens(n), raws(n), semantic_w(n);
            for (std::size_t m = 0; m < n; ++m) {
                beta[m] = heads.gate.apply(semantic_derived[m], sigmoid)[0];
                combos[m].resize(d_v);
                for (std::size_t i = 0; i < d_v; ++i) {
                    combos[m][i] =
                        beta[m] * semantic_derived[m][i] + (1.0 - beta[m]) * prototypes[m][i];
                }
                visual_w[m] = num::l2_normalize(combos[m]);

                joints[m] = concat(descriptor_vec[m], visual_derived[m]);
                hiddens[m] = heads.recon1.apply(joints[m], leaky);
                raws[m] = heads.recon2.apply(hiddens[m], ident);
                semantic_w[m] = num::l2_normalize(raws[m]);
            }

            const double inv_queries = 1.0 / static_cast<double>(episode.query.size());
            std::vector<num::Vector> d_visual_w(n, num::Vector(d_v, 0.0));
            std::vector<num::Vector> d_semantic_w(n, num::Vector(d_s, 0.0));

            for (const auto& [row, label] : episode.query) {
                const num::Vector query = student_visual.row(row);
                const num::Vector projected = projector.apply(query);

                num::Vector visual_scores(n), semantic_scores(n);
                for (std::size_t m = 0; m < n; ++m) {
                    visual_scores[m] = num::cosine_similarity(query, visual_w[m]);
                    semantic_scores[m] = num::cosine_similarity(projected, semantic_w[m]);
                }
                const auto p_v = num::softmax(visual_scores, 1.0);
                const auto p_s = num::softmax(semantic_scores, 1.0);
                loss_sum += -std::log(p_v[label]) - std::log(p_s[label]);
                ++query_count;

                for (std::size_t m = 0; m < n; ++m) {
                    const double dv = (p_v[m] - (m == label ? 1.0 : 0.0)) * inv_queries;
                    const double ds = (p_s[m] - (m == label ? 1.0 : 0.0)) * inv_queries;
                    if (dv != 0.0) {
                        const auto [dq, dw] =
                            num::cosine_similarity_backward(query, visual_w[m], dv);
                        (void)dq;
                        num::axpy(d_visual_w[m], 1.0, dw);
                    }
                    if (ds != 0.0) {
                        const auto [dq, dw] =
                            num::cosine_similarity_backward(projected, semantic_w[m], ds);
                        (void)dq;
                        num::axpy(d_semantic_w[m], 1.0, dw);
                    }
                }

                // training-time metrics on the same queries
                double best_fused = -1e300, best_proto = -1e300;
                std::size_t arg_fused = 0, arg_proto = 0;
                for (std::size_t m = 0; m < n; ++m) {
                    const double fused = visual_scores[m] + lambda * semantic_scores[m];
                    if (fused > best_fused) {
                        best_fused = fused;
                        arg_fused = m;
                    }
                    const double proto = num::cosine_similarity(query, prototypes[m]);
                    if (proto > best_proto) {
                        best_proto = proto;
                        arg_proto = m;
                    }
                }
                fused_correct += arg_fused == label;
                proto_correct += arg_proto == label;
            }

            // backward per class: through the normalizations into G and R
            for (std::size_t m = 0; m < n; ++m) {
                const num::Vector d_combo = num::l2_normalize_backward(combos[m], d_visual_w[m]);
                double d_beta = 0.0;
                for (std::size_t i = 0; i < d_v; ++i) {
                    d_beta += d_combo[i] * (semantic_derived[m][i] - prototypes[m][i]);
                }
                heads.gate.forward(semantic_derived[m], sigmoid);
                heads.gate.backward({d_beta});

                const num::Vector d_raw = num::l2_normalize_backward(raws[m], d_semantic_w[m]);
                heads.recon1.forward(joints[m], leaky);
                heads.recon2.forward(hiddens[m], ident);
                heads.recon1.backward(heads.recon2.backward(d_raw));
            }
            adam.step();
        }

        if (stats && query_count > 0) {
            stats->epoch_loss.push_back(loss_sum / static_cast<double>(query_count));
            stats->epoch_fused_accuracy.push_back(static_cast<double>(fused_correct) /
                                                  static_cast<double>(query_count));
            stats->epoch_proto_accuracy.push_back(static_cast<double>(proto_correct) /
                                                  static_cast<double>(query_count));
        }
    }
    return heads;
}

double confidence_interval95(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double n = static_cast<double>(values.size());
    // shift by the first element: variance is shift-invariant, and constant
    // inputs then yield an exact zero
    const double shift = values.front();
    double mean = 0.0;
    for (double v : values) mean += v - shift;
    mean /= n;
    double var = 0.0;
    for (double v : values) {
        const double d = (v - shift) - mean;
        var += d * d;
    }
    var /= n;
    return 1.96 * std::sqrt(var) / std::sqrt(n);
}

EvalResult evaluate(const data::EmbeddingBank& student_visual,
                    const std::vector<std::uint32_t>& novel_ids,
                    const synmine::SemanticDescriptorSet& descriptors,
                    const vsbird::DualAutoencoder& bridge, const FusionHeads& heads,
                    const distill::Projector& projector, std::size_t n_way, std::size_t k_shot,
                    std::size_t q_queries, std::size_t num_episodes, std::uint64_t seed,
                    double lambda, bool raw_dot, unsigned workers) {
    if (num_episodes == 0) {
        throw Error(Errc::ConfigInvalid, "evaluate: num_episodes must be positive");
    }
    const double lam = resolve_lambda(lambda, k_shot);

    EvalResult result;
    result.n_way = n_way;
    result.k_shot = k_shot;
    result.q_queries = q_queries;
    result.episodes = num_episodes;
    result.seed = seed;
    result.lambda = lam;
    result.per_episode.assign(num_episodes, 0.0);
    result.per_episode_baseline.assign(num_episodes, 0.0);
    result.per_episode_wv.assign(num_episodes, 0.0);

    const auto run_episode = [&](std::size_t index) {
        const auto episode = data::sample_episode(student_visual, novel_ids, n_way, k_shot,
                                                  q_queries, rng::derive_stream(seed, index));
        std::vector<std::vector<num::Vector>> support(n_way);
        for (const auto& [row, label] : episode.support) {
            support[label].push_back(student_visual.row(row));
        }
        std::vector<num::Vector> descriptor_vec(n_way);
        std::vector<num::Vector> prototypes(n_way);
        for (std::size_t m = 0; m < n_way; ++m) {
            descriptor_vec[m] = descriptors.by_id(episode.category_ids[m]).vector;
            prototypes[m] = compute_prototype(support[m]);
        }
        const auto classifier =
            build_classifier(support, descriptor_vec, bridge, heads, lam);

        std::size_t fused_correct = 0;
        std::size_t proto_correct = 0;
        std::size_t wv_correct = 0;
        for (const auto& [row, label] : episode.query) {
            const num::Vector query = student_visual.row(row);
            fused_correct += fused_predict(classifier, query, projector, lam, raw_dot) == label;

            const auto argmax_cosine = [&](const std::vector<num::Vector>& columns) {
                std::size_t best = 0;
                double best_score = -std::numeric_limits<double>::infinity();
                for (std::size_t m = 0; m < columns.size(); ++m) {
                    const double s = num::cosine_similarity(query, columns[m]);
                    if (s > best_score) {
                        best_score = s;
                        best = m;
                    }
                }
                return best;
            };
            proto_correct += argmax_cosine(prototypes) == label;
            wv_correct += argmax_cosine(classifier.visual_weights) == label;
        }
        const double denom = static_cast<double>(episode.query.size());
        result.per_episode[index] = static_cast<double>(fused_correct) / denom;
        result.per_episode_baseline[index] = static_cast<double>(proto_correct) / denom;
        result.per_episode_wv[index] = static_cast<double>(wv_correct) / denom;
    };

    if (workers <= 1) {
        for (std::size_t i = 0; i < num_episodes; ++i) run_episode(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= num_episodes) return;
                    run_episode(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    double fused_mean = 0.0;
    double proto_mean = 0.0;
    double wv_mean = 0.0;
    for (std::size_t i = 0; i < num_episodes; ++i) {
        fused_mean += result.per_episode[i];
        proto_mean += result.per_episode_baseline[i];
        wv_mean += result.per_episode_wv[i];
    }
    fused_mean /= static_cast<double>(num_episodes);
    proto_mean /= static_cast<double>(num_episodes);
    wv_mean /= static_cast<double>(num_episodes);
    result.mean_accuracy = 100.0 * fused_mean;
    result.baseline_mean_accuracy = 100.0 * proto_mean;
    result.wv_mean_accuracy = 100.0 * wv_mean;
    result.ci95 = 100.0 * confidence_interval95(result.per_episode);
    result.baseline_ci95 = 100.0 * confidence_interval95(result.per_episode_baseline);
    result.wv_ci95 = 100.0 * confidence_interval95(result.per_episode_wv);
    return result;
}

void save_heads(const FusionHeads& heads, const std::filesystem::path& path) {
    std::vector<nn::TensorRecord> tensors;
    nn::append_layer_records(tensors, "G", heads.gate);
    nn::append_layer_records(tensors, "R1", heads.recon1);
    nn::append_layer_records(tensors, "R2", heads.recon2);
    nn::save_checkpoint(path, tensors);
}

FusionHeads load_heads(const std::filesystem::path& path, double leaky_slope) {
    const auto tensors = nn::load_checkpoint(path);
    FusionHeads heads;
    heads.gate = nn::layer_from_records(tensors, "G");
    heads.recon1 = nn::layer_from_records(tensors, "R1");
    heads.recon2 = nn::layer_from_records(tensors, "R2");
    heads.leaky_slope = leaky_slope;
    if (heads.recon2.in_dim() != heads.recon1.out_dim()) {
        throw Error(Errc::ShapeMismatch, "fusion checkpoint hidden dims are inconsistent");
    }
    return heads;
}

} // namespace syntrans::fusion
