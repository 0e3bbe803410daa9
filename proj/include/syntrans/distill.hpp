#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "syntrans/dataio.hpp"
#include "syntrans/nnkit.hpp"

namespace syntrans::distill {

// Two stacked linear maps from the student-visual space into the teacher-text
// space. Bias-free so each stage is a single weight tensor; an optional ReLU
// can be switched in between the maps.
struct Projector {
    nn::AffineLayer first;
    nn::AffineLayer second;
    bool relu_between = false;

    num::Vector apply(const num::Vector& x) const;
    num::Vector forward(const num::Vector& x);
    num::Vector backward(const num::Vector& upstream);
    void zero_grad();
};

// One weight vector per base category, scored by scaled cosine similarity.
// Rows are ordered by ascending category id.
struct CosineClassifier {
    num::Matrix weights;      // num_base x d_v
    num::Matrix weight_grads; // same shape
    double scale = 10.0;
    std::vector<std::uint32_t> category_ids; // row -> base category id

    std::size_t row_for_category(std::uint32_t id) const;
};

struct DistillConfig {
    double temperature = 4.0;
    std::size_t epochs = 10;
    std::size_t episodes_per_epoch = 100;
    double lr = 1e-4;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    double classifier_scale = 10.0;
    bool episodic = true; // false: plain shuffled mini-batches over the base rows
    std::size_t n_way = 5;
    std::size_t k_shot = 5;
    std::size_t q_queries = 15;
    std::size_t batch_size = 64;       // flat-batch mode only
    bool projector_relu = false;
    std::size_t projector_hidden = 0;  // 0 -> teacher-text dim
};

num::Vector teacher_logits(const num::Vector& u_t, const std::vector<num::Vector>& text_rows);
num::Vector student_logits(const num::Vector& u_s, const Projector& projector,
                           const std::vector<num::Vector>& text_rows);

// tau^2 * KL(softmax(q_t / tau) || softmax(q_s / tau))
double distill_loss(const num::Vector& q_t, const num::Vector& q_s, double tau);

// Cross-entropy of the scaled-cosine logits at the given classifier row.
double classification_loss(const num::Vector& u_s, std::size_t label_row,
                           const CosineClassifier& classifier);

struct Stage1Result {
    Projector projector;
    CosineClassifier classifier;
    std::vector<double> epoch_ce; // mean per epoch
    std::vector<double> epoch_kd;
};

// Trains the projector and classifier over the base split with
// L_vis = L_ce + L_kd; the embedding banks stay untouched. Writes a
// checkpoint when a path is given.
Stage1Result train_stage1(const data::EmbeddingBank& student_visual,
                          const data::EmbeddingBank& teacher_visual,
                          const data::EmbeddingBank& teacher_text,
                          const data::DatasetSplit& split, const DistillConfig& config,
                          const std::filesystem::path& checkpoint_path = {});

void save_stage1(const Projector& projector, const CosineClassifier& classifier,
                 const std::filesystem::path& path);

struct Stage1Model {
    Projector projector;
    CosineClassifier classifier;
};

Stage1Model load_stage1(const std::filesystem::path& path, bool projector_relu, double scale,
                        std::vector<std::uint32_t> base_ids_sorted);

} // namespace syntrans::distill
