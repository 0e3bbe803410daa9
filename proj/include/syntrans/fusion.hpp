#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "syntrans/dataio.hpp"
#include "syntrans/distill.hpp"
#include "syntrans/synmine.hpp"
#include "syntrans/vsbird.hpp"

namespace syntrans::fusion {

// Meta-learned fusion heads. The gate scores a bridged semantic weight
// (living in the visual space) into a blend coefficient; the reconstructor
// maps [descriptor ; bridged prototype] through a 2048-wide hidden layer back
// into the semantic space.
struct FusionHeads {
    nn::AffineLayer gate;   // d_v -> 1, sigmoid
    nn::AffineLayer recon1; // 2*d_s -> hidden, LeakyReLU
    nn::AffineLayer recon2; // hidden -> d_s
    double leaky_slope = 0.01;
};

struct FusionConfig {
    double lambda = 0.0; // 0 -> 1/K at prediction time
    std::size_t meta_epochs = 10;
    std::size_t episodes_per_epoch = 200;
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t q_queries = 15;
    double lr = 1e-4;
    double weight_decay = 5e-4;
    bool cosine_lr = false;
    std::uint64_t seed = 0;
    std::size_t hidden_dim = 2048;
    // Score with raw dot products instead of per-part cosines.
    bool raw_dot_fusion = false;
};

// Per-episode multimodal classifier; every column unit-normalized.
struct MultimodalClassifier {
    std::vector<num::Vector> visual_weights;   // W_V, visual space
    std::vector<num::Vector> semantic_weights; // W_S, semantic space
    double lambda = 1.0;
};

// L2-normalized sum of the support features.
num::Vector compute_prototype(const std::vector<num::Vector>& support_features);

// beta = sigmoid(G(w_s')), strictly inside (0,1).
double gate_coefficient(const FusionHeads& heads, const num::Vector& semantic_derived);

// normalize(beta * w_s' + (1 - beta) * w_v)
num::Vector visual_dominated_weight(double beta, const num::Vector& semantic_derived,
                                    const num::Vector& prototype);

// normalize(R([descriptor ; visual_derived]))
num::Vector semantic_dominated_weight(const FusionHeads& heads, const num::Vector& descriptor,
                                      const num::Vector& visual_derived);

FusionHeads init_heads(std::size_t visual_dim, std::size_t semantic_dim, std::size_t hidden_dim,
                       std::uint64_t seed);

// Assembles W_V / W_S for one episode from the support features and the
// per-class descriptors, in episode-label order.
MultimodalClassifier build_classifier(const std::vector<std::vector<num::Vector>>& support_by_class,
                                      const std::vector<num::Vector>& descriptors,
                                      const vsbird::DualAutoencoder& bridge,
                                      const FusionHeads& heads, double lambda);

// (P_v, P_s): softmax over cosine scores in the visual and semantic spaces.
std::pair<num::ProbabilityVector, num::ProbabilityVector> episode_probabilities(
    const MultimodalClassifier& classifier, const num::Vector& query_feature,
    const distill::Projector& projector);

// argmax_m [ cos(f(q), W_V[m]) + lambda * cos(f_phi(f(q)), W_S[m]) ]
std::size_t fused_predict(const MultimodalClassifier& classifier, const num::Vector& query_feature,
                          const distill::Projector& projector, double lambda,
                          bool raw_dot = false);

struct MetaTrainStats {
    std::vector<double> epoch_loss;           // mean CE(P_v) + CE(P_s) per query
    std::vector<double> epoch_fused_accuracy; // fused prediction on meta queries
    std::vector<double> epoch_proto_accuracy; // prototype-only baseline
};

// Trains only G and R over base-split episodes; bridge, projector and banks
// stay frozen.
FusionHeads meta_train(const data::EmbeddingBank& student_visual,
                       const std::vector<std::uint32_t>& base_ids,
                       const synmine::SemanticDescriptorSet& descriptors,
                       const vsbird::DualAutoencoder& bridge, const distill::Projector& projector,
                       const FusionConfig& config, MetaTrainStats* stats = nullptr);

struct EvalResult {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t q_queries = 0;
    std::size_t episodes = 0;
    std::uint64_t seed = 0;
    double lambda = 1.0;
    double mean_accuracy = 0.0; // percent
    double ci95 = 0.0;          // percent
    double baseline_mean_accuracy = 0.0; // raw visual prototypes
    double baseline_ci95 = 0.0;
    double wv_mean_accuracy = 0.0; // visual-dominated classifier W_V alone
    double wv_ci95 = 0.0;
    std::vector<double> per_episode;          // fractions in [0,1]
    std::vector<double> per_episode_baseline;
    std::vector<double> per_episode_wv;
};

// 1.96 * stddev(values) / sqrt(n), population stddev, same units as input.
double confidence_interval95(const std::vector<double>& values);

EvalResult evaluate(const data::EmbeddingBank& student_visual,
                    const std::vector<std::uint32_t>& novel_ids,
                    const synmine::SemanticDescriptorSet& descriptors,
                    const vsbird::DualAutoencoder& bridge, const FusionHeads& heads,
                    const distill::Projector& projector, std::size_t n_way, std::size_t k_shot,
                    std::size_t q_queries, std::size_t num_episodes, std::uint64_t seed,
                    double lambda = 0.0, bool raw_dot = false, unsigned workers = 1);

void save_heads(const FusionHeads& heads, const std::filesystem::path& path);
FusionHeads load_heads(const std::filesystem::path& path, double leaky_slope = 0.01);

} // namespace syntrans::fusion
