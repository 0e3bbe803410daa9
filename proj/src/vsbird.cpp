#include "syntrans/vsbird.hpp"

#include <algorithm>
#include <cmath>

#include "syntrans/checkpoint.hpp"
#include "syntrans/rng.hpp"

namespace syntrans::vsbird {

namespace {

constexpr std::uint64_t kVisualEncoderStream = 0x20;
constexpr std::uint64_t kSemanticEncoderStream = 0x21;
constexpr std::uint64_t kVisualDecoderStream = 0x22;
constexpr std::uint64_t kSemanticDecoderStream = 0x23;

double path_loss(const num::Vector& reconstruction, const num::Vector& target, const char* path) {
    try {
        return num::cosine_distance(reconstruction, target);
    } catch (const Error& e) {
        if (e.code() == Errc::ZeroNorm) {
            throw Error(Errc::ZeroNorm, std::string(path) + " reconstruction collapsed to zero");
        }
        throw;
    }
}

} // namespace

BridgePairset make_pairset(const distill::CosineClassifier& classifier,
                           const synmine::SemanticDescriptorSet& descriptors) {
    BridgePairset pairs;
    for (std::size_t r = 0; r < classifier.weights.rows(); ++r) {
        const std::uint32_t id = classifier.category_ids[r];
        pairs.category_ids.push_back(id);
        pairs.visual_weights.push_back(num::l2_normalize(classifier.weights.row_vector(r)));
        pairs.descriptors.push_back(descriptors.by_id(id).vector);
    }
    return pairs;
}

BridgeLosses bridge_losses(const DualAutoencoder& model, const num::Vector& visual_weight,
                           const num::Vector& descriptor) {
    if (visual_weight.size() != model.visual_dim() || descriptor.size() != model.semantic_dim()) {
        throw Error(Errc::DimMismatch, "bridge_losses: input dims do not match model");
    }
    const auto relu = nn::Activation::relu();
    const auto ident = nn::Activation::identity();

    const num::Vector z_v = model.visual_encoder.apply(visual_weight, relu);
    const num::Vector z_s = model.semantic_encoder.apply(descriptor, relu);

    BridgeLosses out;
    out.visual_to_visual = path_loss(model.visual_decoder.apply(z_v, ident), visual_weight, "V->V");
    out.semantic_to_semantic =
        path_loss(model.semantic_decoder.apply(z_s, ident), descriptor, "S->S");
    out.semantic_to_visual =
        path_loss(model.visual_decoder.apply(z_s, ident), visual_weight, "S->V");
    out.visual_to_semantic =
        path_loss(model.semantic_decoder.apply(z_v, ident), descriptor, "V->S");
    return out;
}

double total_bridge_loss(const BridgeLosses& terms, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(Errc::ConfigInvalid, "alpha must lie in [0,1]");
    }
    return alpha * (terms.visual_to_visual + terms.semantic_to_semantic) +
           (1.0 - alpha) * (terms.semantic_to_visual + terms.visual_to_semantic);
}

DualAutoencoder train_bridge(const BridgePairset& pairs, const BridgeConfig& config,
                             std::vector<double>* epoch_losses) {
    const std::size_t n_pairs = pairs.category_ids.size();
    if (n_pairs < 2) {
        throw Error(Errc::InsufficientPairs, "bridge training needs at least 2 category pairs");
    }
    if (pairs.visual_weights.size() != n_pairs || pairs.descriptors.size() != n_pairs) {
        throw Error(Errc::ShapeMismatch, "pairset sides differ in length");
    }
    if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) {
        throw Error(Errc::ConfigInvalid, "alpha must lie in [0,1]");
    }
    const std::size_t d_v = pairs.visual_weights.front().size();
    const std::size_t d_s = pairs.descriptors.front().size();
    const std::size_t d_z = config.latent_dim == 0 ? std::min(d_v, d_s) : config.latent_dim;

    DualAutoencoder model;
    model.visual_encoder = nn::AffineLayer::random_init(
        d_v, d_z, rng::derive_stream(config.seed, kVisualEncoderStream));
    model.semantic_encoder = nn::AffineLayer::random_init(
        d_s, d_z, rng::derive_stream(config.seed, kSemanticEncoderStream));
    model.visual_decoder = nn::AffineLayer::random_init(
        d_z, d_v, rng::derive_stream(config.seed, kVisualDecoderStream));
    model.semantic_decoder = nn::AffineLayer::random_init(
        d_z, d_s, rng::derive_stream(config.seed, kSemanticDecoderStream));
    for (auto* encoder : {&model.visual_encoder, &model.semantic_encoder}) {
        for (double& b : encoder->bias()) b = config.encoder_bias_init;
    }

    nn::AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;
    adam_cfg.weight_decay = config.weight_decay;
    nn::Adam adam(adam_cfg);
    adam.add_layer(model.visual_encoder);
    adam.add_layer(model.semantic_encoder);
    adam.add_layer(model.visual_decoder);
    adam.add_layer(model.semantic_decoder);

    const auto relu = nn::Activation::relu();
    const auto ident = nn::Activation::identity();
    const double inv_pairs = 1.0 / static_cast<double>(n_pairs);

    // one path at a time so each encoder's cache is consumed before reuse
    const auto run_path = [&](nn::AffineLayer& encoder, nn::AffineLayer& decoder,
                              const num::Vector& input, const num::Vector& target,
                              double weight, const char* name) {
        if (weight == 0.0) {
            // loss still reported, no gradient flows
            return path_loss(decoder.apply(encoder.apply(input, relu), ident), target, name);
        }
        const num::Vector z = encoder.forward(input, relu);
        const num::Vector r = decoder.forward(z, ident);
        const double loss = path_loss(r, target, name);
        const auto [dr, dt] = num::cosine_similarity_backward(r, target, -weight);
        (void)dt; // targets are data
        encoder.backward(decoder.backward(dr));
        return loss;
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.cosine_lr) {
            const double frac = static_cast<double>(epoch) / static_cast<double>(config.epochs);
            const double lr_now = config.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
            adam.set_lr(std::max(lr_now, 1e-12));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            const num::Vector& w = pairs.visual_weights[i];
            const num::Vector& t = pairs.descriptors[i];
            BridgeLosses terms;
            terms.visual_to_visual = run_path(model.visual_encoder, model.visual_decoder, w, w,
                                              config.alpha, "V->V");
            terms.semantic_to_semantic = run_path(model.semantic_encoder, model.semantic_decoder,
                                                  t, t, config.alpha, "S->S");
            terms.semantic_to_visual = run_path(model.semantic_encoder, model.visual_decoder, t, w,
                                                1.0 - config.alpha, "S->V");
            terms.visual_to_semantic = run_path(model.visual_encoder, model.semantic_decoder, w, t,
                                                1.0 - config.alpha, "V->S");
            total += total_bridge_loss(terms, config.alpha) * inv_pairs;
            adam.step();
        }
        if (epoch_losses) epoch_losses->push_back(total);
    }
    return model;
}

num::Vector semantic_to_weight(const DualAutoencoder& model, const num::Vector& descriptor) {
    const num::Vector z = model.semantic_encoder.apply(descriptor, nn::Activation::relu());
    return num::l2_normalize(model.visual_decoder.apply(z, nn::Activation::identity()));
}

num::Vector visual_to_semantic(const DualAutoencoder& model, const num::Vector& visual_weight) {
    const num::Vector z = model.visual_encoder.apply(visual_weight, nn::Activation::relu());
    return num::l2_normalize(model.semantic_decoder.apply(z, nn::Activation::identity()));
}

void save_bridge(const DualAutoencoder& model, const std::filesystem::path& path) {
    std::vector<nn::TensorRecord> tensors;
    nn::append_layer_records(tensors, "VE", model.visual_encoder);
    nn::append_layer_records(tensors, "SE", model.semantic_encoder);
    nn::append_layer_records(tensors, "VD", model.visual_decoder);
    nn::append_layer_records(tensors, "SD", model.semantic_decoder);
    nn::save_checkpoint(path, tensors);
}

DualAutoencoder load_bridge(const std::filesystem::path& path) {
    const auto tensors = nn::load_checkpoint(path);
    DualAutoencoder model;
    model.visual_encoder = nn::layer_from_records(tensors, "VE");
    model.semantic_encoder = nn::layer_from_records(tensors, "SE");
    model.visual_decoder = nn::layer_from_records(tensors, "VD");
    model.semantic_decoder = nn::layer_from_records(tensors, "SD");
    if (model.visual_encoder.out_dim() != model.semantic_encoder.out_dim() ||
        model.visual_decoder.in_dim() != model.visual_encoder.out_dim() ||
        model.semantic_decoder.in_dim() != model.visual_encoder.out_dim()) {
        throw Error(Errc::ShapeMismatch, "bridge checkpoint latent dims are inconsistent");
    }
    return model;
}

} // namespace syntrans::vsbird
