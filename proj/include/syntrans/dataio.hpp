#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "syntrans/numcore.hpp"

namespace syntrans::data {

enum class BankSource : std::uint8_t {
    student_visual = 0,
    teacher_visual = 1,
    teacher_text = 2,
};

const char* bank_source_name(BankSource source) noexcept;

struct CategoryInfo {
    std::uint32_t id = 0;
    std::string name;
    std::string definition;

    bool operator==(const CategoryInfo&) const = default;
};

// Labeled matrix of per-sample feature vectors for one modality. Rows are
// stored float32 exactly as they live on disk; consumers convert to double
// per row. A teacher_text bank carries exactly one row per category.
class EmbeddingBank {
public:
    EmbeddingBank() = default;
    EmbeddingBank(BankSource source, std::size_t dim, std::vector<CategoryInfo> categories,
                  std::vector<std::uint32_t> labels, std::vector<float> payload);

    BankSource source() const { return source_; }
    std::size_t dim() const { return dim_; }
    std::size_t num_rows() const { return labels_.size(); }
    std::size_t num_categories() const { return categories_.size(); }

    std::uint32_t label(std::size_t row) const { return labels_[row]; }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    num::Vector row(std::size_t r) const;
    const std::vector<float>& payload() const { return payload_; }

    const std::vector<CategoryInfo>& categories() const { return categories_; }
    const CategoryInfo& category(std::uint32_t id) const;
    bool has_category(std::uint32_t id) const;
    const std::vector<std::size_t>& rows_of_category(std::uint32_t id) const;

    // For a teacher_text bank: the unique row of one category.
    num::Vector category_row(std::uint32_t id) const;

    bool operator==(const EmbeddingBank&) const;

private:
    BankSource source_ = BankSource::student_visual;
    std::size_t dim_ = 0;
    std::vector<CategoryInfo> categories_;
    std::vector<std::uint32_t> labels_;
    std::vector<float> payload_; // num_rows x dim, row-major
    std::map<std::uint32_t, std::vector<std::size_t>> rows_by_category_;
};

// Binary "SYNB" bank plus its sibling JSON manifest ("<path>.json").
void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path);
EmbeddingBank load_bank(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& bank_path);

std::uint64_t content_checksum(const EmbeddingBank& bank);

struct DatasetSplit {
    std::vector<std::uint32_t> base;
    std::vector<std::uint32_t> novel;
};

void validate_split(const DatasetSplit& split); // base and novel must be disjoint
void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

// One N-way K-shot task. Entries are (bank row index, episode label) with
// episode labels remapped to 0..N-1 in category draw order.
struct Episode {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t q_queries = 0;
    std::vector<std::uint32_t> category_ids; // size N; episode label = position
    std::vector<std::pair<std::size_t, std::size_t>> support;
    std::vector<std::pair<std::size_t, std::size_t>> query;
};

Episode sample_episode(const EmbeddingBank& bank, const std::vector<std::uint32_t>& category_pool,
                       std::size_t n_way, std::size_t k_shot, std::size_t q_queries,
                       std::uint64_t stream_seed);

// Desk-scale stand-in for the frozen encoders: per category draw a latent
// prototype, then emit noisy linear views of it in the student-visual,
// teacher-visual and teacher-text spaces, each row L2-normalized.
struct SyntheticSpec {
    std::size_t num_categories = 10;
    std::size_t latent_dim = 4;
    std::size_t visual_dim = 16;
    std::size_t semantic_dim = 16;
    std::size_t samples_per_category = 30;
    double visual_noise = 0.3;
    double semantic_noise = 0.02;
    double teacher_visual_noise = 0.05;
    std::uint64_t seed = 0;
    // Optional explicit mixing matrices; empty means "draw orthonormal
    // columns from the seed".
    num::Matrix mixing_visual;   // visual_dim x latent_dim
    num::Matrix mixing_semantic; // semantic_dim x latent_dim
};

struct SyntheticData {
    EmbeddingBank student_visual;
    EmbeddingBank teacher_visual;
    EmbeddingBank teacher_text;
    num::Matrix latents; // num_categories x latent_dim
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

} // namespace syntrans::data
