#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "syntrans/distill.hpp"
#include "syntrans/nnkit.hpp"
#include "syntrans/synmine.hpp"

namespace syntrans::vsbird {

// Dual autoencoder bridging the visual-weight space and the semantic space
// through a shared latent: encoders carry a ReLU, decoders are plain affine.
struct DualAutoencoder {
    nn::AffineLayer visual_encoder;   // d_v -> d_z
    nn::AffineLayer semantic_encoder; // d_s -> d_z
    nn::AffineLayer visual_decoder;   // d_z -> d_v
    nn::AffineLayer semantic_decoder; // d_z -> d_s

    std::size_t visual_dim() const { return visual_encoder.in_dim(); }
    std::size_t semantic_dim() const { return semantic_encoder.in_dim(); }
    std::size_t latent_dim() const { return visual_encoder.out_dim(); }
};

struct BridgeConfig {
    double alpha = 0.7;
    std::size_t latent_dim = 0; // 0 -> min(d_v, d_s)
    std::size_t epochs = 50;
    double lr = 1e-4; // initial rate; cosine-annealed over the epochs by default
    double weight_decay = 5e-4;
    bool cosine_lr = true;
    // Encoders start with positive biases so the ReLU units begin in their
    // active regime; dead units never recover on such small pairsets.
    double encoder_bias_init = 0.75;
    std::uint64_t seed = 0;
};

// Per base category: the classifier weight and the semantic descriptor,
// both unit-normalized.
struct BridgePairset {
    std::vector<std::uint32_t> category_ids;
    std::vector<num::Vector> visual_weights;
    std::vector<num::Vector> descriptors;
};

BridgePairset make_pairset(const distill::CosineClassifier& classifier,
                           const synmine::SemanticDescriptorSet& descriptors);

struct BridgeLosses {
    double visual_to_visual = 0.0;
    double semantic_to_semantic = 0.0;
    double semantic_to_visual = 0.0;
    double visual_to_semantic = 0.0;
};

// Cosine-distance reconstruction terms for the four encoder/decoder paths.
BridgeLosses bridge_losses(const DualAutoencoder& model, const num::Vector& visual_weight,
                           const num::Vector& descriptor);

// alpha * (self terms) + (1 - alpha) * (cross terms)
double total_bridge_loss(const BridgeLosses& terms, double alpha);

// One epoch = one pass over all category pairs with an optimizer step per
// pair. Returns the trained model; per-epoch mean totals land in
// *epoch_losses when provided.
DualAutoencoder train_bridge(const BridgePairset& pairs, const BridgeConfig& config,
                             std::vector<double>* epoch_losses = nullptr);

// Inference mappings; outputs are re-normalized before downstream cosine use.
num::Vector semantic_to_weight(const DualAutoencoder& model, const num::Vector& descriptor);
num::Vector visual_to_semantic(const DualAutoencoder& model, const num::Vector& visual_weight);

void save_bridge(const DualAutoencoder& model, const std::filesystem::path& path);
DualAutoencoder load_bridge(const std::filesystem::path& path);

} // namespace syntrans::vsbird
