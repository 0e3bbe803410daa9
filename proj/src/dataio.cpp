#include "syntrans/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "binio.hpp"
#include "syntrans/hashing.hpp"
#include "syntrans/rng.hpp"

namespace syntrans::data {

using detail::ByteReader;
using detail::put_f32;
using detail::put_u32;
using detail::put_u8;
using nlohmann::json;

namespace {

constexpr std::uint32_t kBankVersion = 1;

std::string read_file(const std::filesystem::path& path, Errc missing) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(missing, "cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::MissingArtifact, "cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(Errc::CorruptPayload, "short write on " + path.string());
    }
}

// Gaussian matrix with Gram-Schmidt-orthonormalized columns.
num::Matrix random_orthonormal_columns(std::mt19937_64& eng, std::size_t rows, std::size_t cols) {
    num::Matrix m(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) {
        num::Vector col(rows);
        for (double& v : col) v = rng::normal(eng);
        for (std::size_t prev = 0; prev < c; ++prev) {
            double proj = 0.0;
            for (std::size_t r = 0; r < rows; ++r) proj += col[r] * m(r, prev);
            for (std::size_t r = 0; r < rows; ++r) col[r] -= proj * m(r, prev);
        }
        const double n = num::norm(col);
        if (n <= 1e-9) {
            throw Error(Errc::ZeroNorm, "degenerate column while building mixing matrix");
        }
        for (std::size_t r = 0; r < rows; ++r) m(r, c) = col[r] / n;
    }
    return m;
}

std::vector<float> to_f32(const num::Vector& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

} // namespace

const char* bank_source_name(BankSource source) noexcept {
    switch (source) {
    case BankSource::student_visual: return "student_visual";
    case BankSource::teacher_visual: return "teacher_visual";
    case BankSource::teacher_text: return "teacher_text";
    }
    return "unknown";
}

EmbeddingBank::EmbeddingBank(BankSource source, std::size_t dim,
                             std::vector<CategoryInfo> categories,
                             std::vector<std::uint32_t> labels, std::vector<float> payload)
    : source_(source),
      dim_(dim),
      categories_(std::move(categories)),
      labels_(std::move(labels)),
      payload_(std::move(payload)) {
    if (dim_ == 0) {
        throw Error(Errc::ShapeMismatch, "bank dim must be positive");
    }
    if (payload_.size() != labels_.size() * dim_) {
        throw Error(Errc::CorruptPayload, "bank payload size does not match rows x dim");
    }
    for (float v : payload_) {
        if (!std::isfinite(v)) {
            throw Error(Errc::CorruptPayload, "bank payload contains a non-finite value");
        }
    }
    std::set<std::uint32_t> ids;
    for (const CategoryInfo& c : categories_) {
        if (!ids.insert(c.id).second) {
            throw Error(Errc::CorruptPayload, "duplicate category id " + std::to_string(c.id));
        }
    }
    for (std::size_t r = 0; r < labels_.size(); ++r) {
        if (!ids.count(labels_[r])) {
            throw Error(Errc::LabelOutOfRange,
                        "row " + std::to_string(r) + " references undeclared category " +
                            std::to_string(labels_[r]));
        }
        rows_by_category_[labels_[r]].push_back(r);
    }
    if (source_ == BankSource::teacher_text) {
        for (const CategoryInfo& c : categories_) {
            const auto it = rows_by_category_.find(c.id);
            const std::size_t count = it == rows_by_category_.end() ? 0 : it->second.size();
            if (count != 1) {
                throw Error(Errc::CorruptPayload,
                            "teacher_text bank must have exactly one row per category; category " +
                                std::to_string(c.id) + " has " + std::to_string(count));
            }
        }
    }
}

num::Vector EmbeddingBank::row(std::size_t r) const {
    num::Vector out(dim_);
    const float* base = payload_.data() + r * dim_;
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<double>(base[i]);
    return out;
}

const CategoryInfo& EmbeddingBank::category(std::uint32_t id) const {
    for (const CategoryInfo& c : categories_) {
        if (c.id == id) return c;
    }
    throw Error(Errc::LabelOutOfRange, "category " + std::to_string(id) + " not declared");
}

bool EmbeddingBank::has_category(std::uint32_t id) const {
    return std::any_of(categories_.begin(), categories_.end(),
                       [&](const CategoryInfo& c) { return c.id == id; });
}

const std::vector<std::size_t>& EmbeddingBank::rows_of_category(std::uint32_t id) const {
    static const std::vector<std::size_t> empty;
    const auto it = rows_by_category_.find(id);
    return it == rows_by_category_.end() ? empty : it->second;
}

num::Vector EmbeddingBank::category_row(std::uint32_t id) const {
    const auto& rows = rows_of_category(id);
    if (rows.size() != 1) {
        throw Error(Errc::CorruptPayload,
                    "expected exactly one row for category " + std::to_string(id));
    }
    return row(rows.front());
}

bool EmbeddingBank::operator==(const EmbeddingBank& other) const {
    return source_ == other.source_ && dim_ == other.dim_ && categories_ == other.categories_ &&
           labels_ == other.labels_ && payload_ == other.payload_;
}

std::filesystem::path manifest_path(const std::filesystem::path& bank_path) {
    std::filesystem::path p = bank_path;
    p += ".json";
    return p;
}

void save_bank(const EmbeddingBank& bank, const std::filesystem::path& path) {
    std::string buf;
    buf.append("SYNB");
    put_u32(buf, kBankVersion);
    put_u8(buf, static_cast<std::uint8_t>(bank.source()));
    put_u32(buf, static_cast<std::uint32_t>(bank.num_categories()));
    put_u32(buf, static_cast<std::uint32_t>(bank.dim()));
    put_u32(buf, static_cast<std::uint32_t>(bank.num_rows()));
    for (std::uint32_t label : bank.labels()) put_u32(buf, label);
    for (float v : bank.payload()) put_f32(buf, v);
    write_file(path, buf);

    json manifest;
    manifest["categories"] = json::array();
    for (const CategoryInfo& c : bank.categories()) {
        manifest["categories"].push_back(
            {{"id", c.id}, {"name", c.name}, {"definition", c.definition}});
    }
    write_file(manifest_path(path), manifest.dump(2) + "\n");
}

EmbeddingBank load_bank(const std::filesystem::path& path) {
    const std::string buf = read_file(path, Errc::MissingBank);
    ByteReader r(buf.data(), buf.size(), "bank");
    if (r.str(4) != "SYNB") {
        throw Error(Errc::BadMagic, "not a SYNB bank: " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kBankVersion) {
        throw Error(Errc::VersionUnsupported,
                    "bank version " + std::to_string(version) + " unsupported");
    }
    const std::uint8_t source_tag = r.u8();
    if (source_tag > 2) {
        throw Error(Errc::CorruptPayload, "unknown source tag " + std::to_string(source_tag));
    }
    const std::uint32_t num_categories = r.u32();
    const std::uint32_t dim = r.u32();
    const std::uint32_t num_rows = r.u32();
    std::vector<std::uint32_t> labels(num_rows);
    for (auto& l : labels) l = r.u32();
    std::vector<float> payload(static_cast<std::size_t>(num_rows) * dim);
    for (auto& v : payload) v = r.f32();
    if (!r.at_end()) {
        throw Error(Errc::CorruptPayload, "trailing bytes in bank " + path.string());
    }

    const std::string manifest_text = read_file(manifest_path(path), Errc::MissingArtifact);
    json manifest = json::parse(manifest_text, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("categories")) {
        throw Error(Errc::CorruptPayload, "invalid bank manifest " + manifest_path(path).string());
    }
    std::vector<CategoryInfo> categories;
    for (const auto& entry : manifest["categories"]) {
        CategoryInfo c;
        c.id = entry.at("id").get<std::uint32_t>();
        c.name = entry.value("name", "");
        c.definition = entry.value("definition", "");
        categories.push_back(std::move(c));
    }
    if (categories.size() != num_categories) {
        throw Error(Errc::CorruptPayload, "manifest category count does not match bank header");
    }
    return EmbeddingBank(static_cast<BankSource>(source_tag), dim, std::move(categories),
                         std::move(labels), std::move(payload));
}

std::uint64_t content_checksum(const EmbeddingBank& bank) {
    std::uint64_t h = hashing::fnv1a_bytes(bank.labels().data(),
                                           bank.labels().size() * sizeof(std::uint32_t));
    h = hashing::fnv1a_bytes(bank.payload().data(), bank.payload().size() * sizeof(float), h);
    return h;
}

void validate_split(const DatasetSplit& split) {
    std::set<std::uint32_t> base(split.base.begin(), split.base.end());
    for (std::uint32_t id : split.novel) {
        if (base.count(id)) {
            throw Error(Errc::ConfigInvalid,
                        "split: category " + std::to_string(id) + " appears in base and novel");
        }
    }
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
    validate_split(split);
    json j;
    j["base"] = split.base;
    j["novel"] = split.novel;
    write_file(path, j.dump(2) + "\n");
}

DatasetSplit load_split(const std::filesystem::path& path) {
    const std::string text = read_file(path, Errc::MissingArtifact);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("base") || !j.contains("novel")) {
        throw Error(Errc::CorruptPayload, "invalid split file " + path.string());
    }
    DatasetSplit split;
    split.base = j["base"].get<std::vector<std::uint32_t>>();
    split.novel = j["novel"].get<std::vector<std::uint32_t>>();
    validate_split(split);
    return split;
}

Episode sample_episode(const EmbeddingBank& bank, const std::vector<std::uint32_t>& category_pool,
                       std::size_t n_way, std::size_t k_shot, std::size_t q_queries,
                       std::uint64_t stream_seed) {
    if (n_way == 0 || k_shot == 0 || q_queries == 0) {
        throw Error(Errc::ConfigInvalid, "episode shape parameters must be positive");
    }
    if (category_pool.size() < n_way) {
        throw Error(Errc::InsufficientCategories,
                    "need " + std::to_string(n_way) + " categories, pool has " +
                        std::to_string(category_pool.size()));
    }
    auto eng = rng::make_engine(stream_seed);
    const auto chosen = rng::sample_indices(eng, category_pool.size(), n_way);

    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.q_queries = q_queries;
    for (std::size_t pos = 0; pos < n_way; ++pos) {
        const std::uint32_t cat = category_pool[chosen[pos]];
        ep.category_ids.push_back(cat);
        const auto& rows = bank.rows_of_category(cat);
        if (rows.size() < k_shot + q_queries) {
            throw Error(Errc::InsufficientSamples,
                        "category " + std::to_string(cat) + " has " + std::to_string(rows.size()) +
                            " samples, needs " + std::to_string(k_shot + q_queries));
        }
        const auto picks = rng::sample_indices(eng, rows.size(), k_shot + q_queries);
        for (std::size_t i = 0; i < k_shot; ++i) {
            ep.support.emplace_back(rows[picks[i]], pos);
        }
        for (std::size_t i = k_shot; i < k_shot + q_queries; ++i) {
            ep.query.emplace_back(rows[picks[i]], pos);
        }
    }
    return ep;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_categories < 2 || spec.latent_dim < 2 || spec.visual_dim < 2 ||
        spec.semantic_dim < 2 || spec.samples_per_category < 1) {
        throw Error(Errc::ConfigInvalid, "synthetic spec dimensions out of range");
    }
    if (spec.visual_noise < 0.0 || spec.semantic_noise < 0.0 || spec.teacher_visual_noise < 0.0) {
        throw Error(Errc::ConfigInvalid, "synthetic noise scales must be nonnegative");
    }

    auto eng = rng::make_engine(spec.seed);
    num::Matrix mix_v = spec.mixing_visual;
    if (mix_v.empty()) {
        mix_v = random_orthonormal_columns(eng, spec.visual_dim, spec.latent_dim);
    } else if (mix_v.rows() != spec.visual_dim || mix_v.cols() != spec.latent_dim) {
        throw Error(Errc::DimMismatch, "mixing_visual shape does not match spec dims");
    }
    num::Matrix mix_s = spec.mixing_semantic;
    if (mix_s.empty()) {
        mix_s = random_orthonormal_columns(eng, spec.semantic_dim, spec.latent_dim);
    } else if (mix_s.rows() != spec.semantic_dim || mix_s.cols() != spec.latent_dim) {
        throw Error(Errc::DimMismatch, "mixing_semantic shape does not match spec dims");
    }

    num::Matrix latents(spec.num_categories, spec.latent_dim);
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        for (std::size_t d = 0; d < spec.latent_dim; ++d) latents(c, d) = rng::normal(eng);
    }

    std::vector<CategoryInfo> categories;
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        CategoryInfo info;
        info.id = static_cast<std::uint32_t>(c);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "class_%02zu", c);
        info.name = buf;
        info.definition = "synthetic prototype category " + std::to_string(c);
        categories.push_back(std::move(info));
    }

    auto noisy_view = [&](const num::Matrix& mix, const num::Vector& z, double noise) {
        num::Vector v = num::matvec(mix, z);
        for (double& x : v) x += noise * rng::normal(eng);
        return num::l2_normalize(v);
    };

    // draw order: text rows, then per-category student rows, then teacher rows
    std::vector<float> text_payload;
    std::vector<std::uint32_t> text_labels;
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        const num::Vector t = noisy_view(mix_s, latents.row_vector(c), spec.semantic_noise);
        const auto f = to_f32(t);
        text_payload.insert(text_payload.end(), f.begin(), f.end());
        text_labels.push_back(static_cast<std::uint32_t>(c));
    }

    std::vector<float> student_payload;
    std::vector<std::uint32_t> sample_labels;
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_category; ++s) {
            const num::Vector u = noisy_view(mix_v, latents.row_vector(c), spec.visual_noise);
            const auto f = to_f32(u);
            student_payload.insert(student_payload.end(), f.begin(), f.end());
            sample_labels.push_back(static_cast<std::uint32_t>(c));
        }
    }

    // teacher-visual rows are aligned 1:1 with the student rows and live in
    // the semantic space, standing in for a vision-language image encoder
    std::vector<float> teacher_payload;
    for (std::size_t c = 0; c < spec.num_categories; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_category; ++s) {
            const num::Vector u =
                noisy_view(mix_s, latents.row_vector(c), spec.teacher_visual_noise);
            const auto f = to_f32(u);
            teacher_payload.insert(teacher_payload.end(), f.begin(), f.end());
        }
    }

    SyntheticData out;
    out.student_visual = EmbeddingBank(BankSource::student_visual, spec.visual_dim, categories,
                                       sample_labels, std::move(student_payload));
    out.teacher_visual = EmbeddingBank(BankSource::teacher_visual, spec.semantic_dim, categories,
                                       sample_labels, std::move(teacher_payload));
    out.teacher_text = EmbeddingBank(BankSource::teacher_text, spec.semantic_dim, categories,
                                     std::move(text_labels), std::move(text_payload));
    out.latents = std::move(latents);
    return out;
}

} // namespace syntrans::data
