#include "syntrans/distill.hpp"

#include <algorithm>
#include <cmath>

#include "syntrans/checkpoint.hpp"
#include "syntrans/rng.hpp"

namespace syntrans::distill {

namespace {

// Stream indices carving independent RNG lanes out of one run seed.
constexpr std::uint64_t kProjectorFirstStream = 0x10;
constexpr std::uint64_t kProjectorSecondStream = 0x11;
constexpr std::uint64_t kClassifierStream = 0x12;
constexpr std::uint64_t kShuffleStreamBase = 0x1000;
constexpr std::uint64_t kEpisodeStreamBase = 0x100000;

} // namespace

num::Vector Projector::apply(const num::Vector& x) const {
    const auto mid = relu_between ? nn::Activation::relu() : nn::Activation::identity();
    return second.apply(first.apply(x, mid), nn::Activation::identity());
}

num::Vector Projector::forward(const num::Vector& x) {
    const auto mid = relu_between ? nn::Activation::relu() : nn::Activation::identity();
    return second.forward(first.forward(x, mid), nn::Activation::identity());
}

num::Vector Projector::backward(const num::Vector& upstream) {
    return first.backward(second.backward(upstream));
}

void Projector::zero_grad() {
    first.zero_grad();
    second.zero_grad();
}

std::size_t CosineClassifier::row_for_category(std::uint32_t id) const {
    for (std::size_t r = 0; r < category_ids.size(); ++r) {
        if (category_ids[r] == id) return r;
    }
    throw Error(Errc::LabelOutOfRange,
                "category " + std::to_string(id) + " is not a classifier row");
}

num::Vector teacher_logits(const num::Vector& u_t, const std::vector<num::Vector>& text_rows) {
    if (num::norm(u_t) <= num::kNormEpsilon) {
        throw Error(Errc::ZeroNorm, "teacher feature has zero norm");
    }
    num::Vector out(text_rows.size());
    for (std::size_t j = 0; j < text_rows.size(); ++j) {
        out[j] = num::dot(u_t, text_rows[j]);
    }
    return out;
}

num::Vector student_logits(const num::Vector& u_s, const Projector& projector,
                           const std::vector<num::Vector>& text_rows) {
    const num::Vector projected = num::l2_normalize(projector.apply(u_s));
    num::Vector out(text_rows.size());
    for (std::size_t j = 0; j < text_rows.size(); ++j) {
        out[j] = num::dot(projected, text_rows[j]);
    }
    return out;
}

double distill_loss(const num::Vector& q_t, const num::Vector& q_s, double tau) {
    if (q_t.size() != q_s.size()) {
        throw Error(Errc::ShapeMismatch, "distill_loss: logit lengths differ");
    }
    const auto p = num::softmax(q_t, tau);
    const auto s = num::softmax(q_s, tau);
    return tau * tau * num::kl_divergence(p, s);
}

double classification_loss(const num::Vector& u_s, std::size_t label_row,
                           const CosineClassifier& classifier) {
    if (label_row >= classifier.weights.rows()) {
        throw Error(Errc::LabelOutOfRange, "classification_loss: label row out of range");
    }
    num::Vector logits(classifier.weights.rows());
    for (std::size_t c = 0; c < classifier.weights.rows(); ++c) {
        logits[c] = classifier.scale *
                    num::cosine_similarity(u_s, classifier.weights.row_vector(c));
    }
    const auto p = num::softmax(logits, 1.0);
    return -std::log(p[label_row]);
}

namespace {

struct TrainerState {
    Projector projector;
    CosineClassifier classifier;
    nn::Adam adam;

    TrainerState(nn::AdamConfig cfg) : adam(cfg) {}
};

// Accumulates gradients for one sample; returns (ce, kd) losses. task_rows
// pairs each KD text vector with nothing extra; CE always runs over every
// classifier row.
std::pair<double, double> accumulate_sample(TrainerState& st, const num::Vector& u_s,
                                            const num::Vector& u_t, std::size_t label_row,
                                            const std::vector<num::Vector>& task_text,
                                            double tau, double inv_batch) {
    // cross-entropy over scaled cosine logits
    const std::size_t n_cats = st.classifier.weights.rows();
    num::Vector logits(n_cats);
    std::vector<num::Vector> weight_rows(n_cats);
    for (std::size_t c = 0; c < n_cats; ++c) {
        weight_rows[c] = st.classifier.weights.row_vector(c);
        logits[c] = st.classifier.scale * num::cosine_similarity(u_s, weight_rows[c]);
    }
    const auto p_ce = num::softmax(logits, 1.0);
    const double loss_ce = -std::log(p_ce[label_row]);
    for (std::size_t c = 0; c < n_cats; ++c) {
        const double dlogit =
            (p_ce[c] - (c == label_row ? 1.0 : 0.0)) * st.classifier.scale * inv_batch;
        if (dlogit == 0.0) continue;
        const auto [du, dw] = num::cosine_similarity_backward(u_s, weight_rows[c], dlogit);
        (void)du; // student features are frozen
        auto grad_row = st.classifier.weight_grads.row(c);
        for (std::size_t i = 0; i < dw.size(); ++i) grad_row[i] += dw[i];
    }

    // distillation: match softened teacher logits over the task categories
    const num::Vector q_t = teacher_logits(u_t, task_text);
    const num::Vector v = st.projector.forward(u_s);
    const num::Vector v_hat = num::l2_normalize(v);
    num::Vector q_s(task_text.size());
    for (std::size_t j = 0; j < task_text.size(); ++j) q_s[j] = num::dot(v_hat, task_text[j]);

    const auto p_soft = num::softmax(q_t, tau);
    const auto s_soft = num::softmax(q_s, tau);
    const double loss_kd = tau * tau * num::kl_divergence(p_soft, s_soft);

    num::Vector d_vhat(v_hat.size(), 0.0);
    for (std::size_t j = 0; j < task_text.size(); ++j) {
        const double dq = tau * (s_soft[j] - p_soft[j]) * inv_batch;
        num::axpy(d_vhat, dq, task_text[j]);
    }
    st.projector.backward(num::l2_normalize_backward(v, d_vhat));

    return {loss_ce, loss_kd};
}

} // namespace

Stage1Result train_stage1(const data::EmbeddingBank& student_visual,
                          const data::EmbeddingBank& teacher_visual,
                          const data::EmbeddingBank& teacher_text,
                          const data::DatasetSplit& split, const DistillConfig& config,
                          const std::filesystem::path& checkpoint_path) {
    if (!(config.temperature > 0.0)) {
        throw Error(Errc::ConfigInvalid, "distill temperature must be positive");
    }
    if (split.base.empty()) {
        throw Error(Errc::InsufficientCategories, "base split is empty");
    }
    if (teacher_visual.num_rows() != student_visual.num_rows() ||
        teacher_visual.labels() != student_visual.labels()) {
        throw Error(Errc::MissingBank,
                    "teacher_visual bank must align row-for-row with student_visual");
    }
    std::vector<std::uint32_t> base_ids = split.base;
    std::sort(base_ids.begin(), base_ids.end());
    for (std::uint32_t id : base_ids) {
        if (!student_visual.has_category(id) || student_visual.rows_of_category(id).empty()) {
            throw Error(Errc::MissingBank,
                        "student_visual bank lacks samples for base category " +
                            std::to_string(id));
        }
        if (!teacher_text.has_category(id)) {
            throw Error(Errc::MissingBank,
                        "teacher_text bank lacks base category " + std::to_string(id));
        }
    }

    const std::size_t d_v = student_visual.dim();
    const std::size_t d_s = teacher_text.dim();
    const std::size_t hidden = config.projector_hidden == 0 ? d_s : config.projector_hidden;

    nn::AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;
    adam_cfg.weight_decay = config.weight_decay;
    TrainerState st(adam_cfg);
    st.projector.first =
        nn::AffineLayer::random_init(d_v, hidden, rng::derive_stream(config.seed, kProjectorFirstStream),
                                     /*with_bias=*/false);
    st.projector.second =
        nn::AffineLayer::random_init(hidden, d_s, rng::derive_stream(config.seed, kProjectorSecondStream),
                                     /*with_bias=*/false);
    st.projector.relu_between = config.projector_relu;

    st.classifier.scale = config.classifier_scale;
    st.classifier.category_ids = base_ids;
    st.classifier.weights = num::Matrix(base_ids.size(), d_v);
    st.classifier.weight_grads = num::Matrix(base_ids.size(), d_v);
    {
        auto eng = rng::make_engine(rng::derive_stream(config.seed, kClassifierStream));
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_v));
        for (double& w : st.classifier.weights.data()) w = rng::uniform(eng, -bound, bound);
    }

    st.adam.add_layer(st.projector.first);
    st.adam.add_layer(st.projector.second);
    st.adam.add_parameter(st.classifier.weights.data(), st.classifier.weight_grads.data());

    // teacher text vectors, re-normalized in double precision
    std::vector<num::Vector> base_text(base_ids.size());
    for (std::size_t r = 0; r < base_ids.size(); ++r) {
        base_text[r] = num::l2_normalize(teacher_text.category_row(base_ids[r]));
    }

    Stage1Result result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double sum_ce = 0.0;
        double sum_kd = 0.0;
        std::size_t samples_seen = 0;

        if (config.episodic) {
            for (std::size_t e = 0; e < config.episodes_per_epoch; ++e) {
                const std::uint64_t stream = rng::derive_stream(
                    config.seed, kEpisodeStreamBase + epoch * config.episodes_per_epoch + e);
                const auto episode = data::sample_episode(student_visual, base_ids, config.n_way,
                                                          config.k_shot, config.q_queries, stream);
                std::vector<num::Vector> task_text;
                for (std::uint32_t cat : episode.category_ids) {
                    task_text.push_back(base_text[st.classifier.row_for_category(cat)]);
                }
                std::vector<std::pair<std::size_t, std::size_t>> all = episode.support;
                all.insert(all.end(), episode.query.begin(), episode.query.end());
                const double inv_batch = 1.0 / static_cast<double>(all.size());
                for (const auto& [row, ep_label] : all) {
                    const auto [ce, kd] = accumulate_sample(
                        st, student_visual.row(row), teacher_visual.row(row),
                        st.classifier.row_for_category(episode.category_ids[ep_label]), task_text,
                        config.temperature, inv_batch);
                    sum_ce += ce;
                    sum_kd += kd;
                    ++samples_seen;
                }
                st.adam.step();
            }
        } else {
            std::vector<std::size_t> rows;
            for (std::uint32_t id : base_ids) {
                const auto& r = student_visual.rows_of_category(id);
                rows.insert(rows.end(), r.begin(), r.end());
            }
            auto eng = rng::make_engine(rng::derive_stream(config.seed, kShuffleStreamBase + epoch));
            for (std::size_t i = rows.size(); i > 1; --i) {
                std::swap(rows[i - 1], rows[rng::uniform_below(eng, i)]);
            }
            for (std::size_t start = 0; start < rows.size(); start += config.batch_size) {
                const std::size_t end = std::min(rows.size(), start + config.batch_size);
                const double inv_batch = 1.0 / static_cast<double>(end - start);
                for (std::size_t i = start; i < end; ++i) {
                    const std::size_t row = rows[i];
                    const auto [ce, kd] = accumulate_sample(
                        st, student_visual.row(row), teacher_visual.row(row),
                        st.classifier.row_for_category(student_visual.label(row)), base_text,
                        config.temperature, inv_batch);
                    sum_ce += ce;
                    sum_kd += kd;
                    ++samples_seen;
                }
                st.adam.step();
            }
        }

        if (samples_seen > 0) {
            result.epoch_ce.push_back(sum_ce / static_cast<double>(samples_seen));
            result.epoch_kd.push_back(sum_kd / static_cast<double>(samples_seen));
        }
    }

    result.projector = std::move(st.projector);
    result.classifier = std::move(st.classifier);
    if (!checkpoint_path.empty()) {
        save_stage1(result.projector, result.classifier, checkpoint_path);
    }
    return result;
}

void save_stage1(const Projector& projector, const CosineClassifier& classifier,
                 const std::filesystem::path& path) {
    std::vector<nn::TensorRecord> tensors;
    tensors.push_back(nn::matrix_record("projector.0", projector.first.weight()));
    tensors.push_back(nn::matrix_record("projector.1", projector.second.weight()));
    tensors.push_back(nn::matrix_record("classifier.W", classifier.weights));
    nn::save_checkpoint(path, tensors);
}

Stage1Model load_stage1(const std::filesystem::path& path, bool projector_relu, double scale,
                        std::vector<std::uint32_t> base_ids_sorted) {
    const auto tensors = nn::load_checkpoint(path);
    Stage1Model model;
    const num::Matrix w0 = nn::record_to_matrix(nn::find_tensor(tensors, "projector.0"));
    const num::Matrix w1 = nn::record_to_matrix(nn::find_tensor(tensors, "projector.1"));
    model.projector.first = nn::AffineLayer(w0.cols(), w0.rows(), /*with_bias=*/false);
    model.projector.first.weight() = w0;
    model.projector.second = nn::AffineLayer(w1.cols(), w1.rows(), /*with_bias=*/false);
    model.projector.second.weight() = w1;
    model.projector.relu_between = projector_relu;

    model.classifier.weights = nn::record_to_matrix(nn::find_tensor(tensors, "classifier.W"));
    model.classifier.weight_grads =
        num::Matrix(model.classifier.weights.rows(), model.classifier.weights.cols());
    model.classifier.scale = scale;
    if (base_ids_sorted.size() != model.classifier.weights.rows()) {
        throw Error(Errc::ShapeMismatch,
                    "classifier rows do not match the provided base category ids");
    }
    model.classifier.category_ids = std::move(base_ids_sorted);
    return model;
}

} // namespace syntrans::distill
