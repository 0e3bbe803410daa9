#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "syntrans/dataio.hpp"
#include "syntrans/rng.hpp"

using namespace syntrans;
using data::BankSource;
using data::CategoryInfo;
using data::EmbeddingBank;

namespace {

std::filesystem::path temp_dir(const char* tag) {
    auto dir = std::filesystem::temp_directory_path() / tag;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

EmbeddingBank small_bank() {
    std::vector<CategoryInfo> cats = {{0, "ant", "small insect"}, {1, "bee", "striped insect"}};
    std::vector<std::uint32_t> labels = {0, 0, 1};
    std::vector<float> payload = {0.5f, 0.25f, -1.0f, 2.0f, 0.0f, 1.0f, 0.75f, -0.5f,
                                  1.0f, 0.0f, 0.0f, 0.0f};
    return EmbeddingBank(BankSource::student_visual, 4, cats, labels, payload);
}

// Brute-force nearest-descriptor classifier used as the generator oracle.
double nearest_descriptor_accuracy(const EmbeddingBank& visual, const EmbeddingBank& text) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < visual.num_rows(); ++r) {
        const num::Vector u = visual.row(r);
        double best = -2.0;
        std::uint32_t best_cat = 0;
        for (const auto& cat : text.categories()) {
            const double sim = num::cosine_similarity(u, text.category_row(cat.id));
            if (sim > best) {
                best = sim;
                best_cat = cat.id;
            }
        }
        if (best_cat == visual.label(r)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(visual.num_rows());
}

} // namespace

TEST_SUITE_BEGIN("dataio");

TEST_CASE("bank save/load round trip is bitwise exact") {
    const auto dir = temp_dir("syntrans_dataio_rt");
    const auto path = dir / "bank.synb";
    const EmbeddingBank original = small_bank();
    data::save_bank(original, path);
    const EmbeddingBank loaded = data::load_bank(path);
    CHECK(loaded == original);
    CHECK(data::content_checksum(loaded) == data::content_checksum(original));

    // saving the loaded bank again reproduces the file byte for byte
    const auto copy = dir / "bank2.synb";
    data::save_bank(loaded, copy);
    const auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(path) == slurp(copy));
    std::filesystem::remove_all(dir);
}

TEST_CASE("bank loader rejects corruption") {
    const auto dir = temp_dir("syntrans_dataio_bad");
    const auto path = dir / "bank.synb";
    data::save_bank(small_bank(), path);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    const auto truncated = dir / "trunc.synb";
    {
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    }
    std::filesystem::copy_file(data::manifest_path(path), data::manifest_path(truncated));
    try {
        data::load_bank(truncated);
        FAIL("expected CorruptPayload");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CorruptPayload);
    }

    const auto bad_version = dir / "version.synb";
    {
        std::string copy = bytes;
        copy[4] = 9; // version field
        std::ofstream out(bad_version, std::ios::binary);
        out.write(copy.data(), static_cast<std::streamsize>(copy.size()));
    }
    std::filesystem::copy_file(data::manifest_path(path), data::manifest_path(bad_version));
    try {
        data::load_bank(bad_version);
        FAIL("expected VersionUnsupported");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::VersionUnsupported);
    }

    const auto bad_magic = dir / "magic.synb";
    {
        std::string copy = bytes;
        copy[0] = 'X';
        std::ofstream out(bad_magic, std::ios::binary);
        out.write(copy.data(), static_cast<std::streamsize>(copy.size()));
    }
    std::filesystem::copy_file(data::manifest_path(path), data::manifest_path(bad_magic));
    try {
        data::load_bank(bad_magic);
        FAIL("expected BadMagic");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::BadMagic);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("bank label validation") {
    std::vector<CategoryInfo> cats;
    for (std::uint32_t i = 0; i < 5; ++i) cats.push_back({i, "c" + std::to_string(i), ""});
    std::vector<std::uint32_t> labels = {7};
    std::vector<float> payload = {1.0f, 0.0f};
    try {
        EmbeddingBank(BankSource::student_visual, 2, cats, labels, payload);
        FAIL("expected LabelOutOfRange");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::LabelOutOfRange);
    }
}

TEST_CASE("teacher_text banks require one row per category") {
    std::vector<CategoryInfo> cats = {{0, "a", ""}, {1, "b", ""}};
    std::vector<std::uint32_t> labels = {0, 0, 1};
    std::vector<float> payload = {1, 0, 0, 1, 0.5f, 0.5f};
    CHECK_THROWS_AS(EmbeddingBank(BankSource::teacher_text, 2, cats, labels, payload), Error);

    std::vector<std::uint32_t> ok_labels = {0, 1};
    std::vector<float> ok_payload = {1, 0, 0, 1};
    const EmbeddingBank bank(BankSource::teacher_text, 2, cats, ok_labels, ok_payload);
    CHECK(bank.category_row(1)[1] == 1.0);
}

TEST_CASE("split round trip and disjointness") {
    const auto dir = temp_dir("syntrans_dataio_split");
    data::DatasetSplit split;
    split.base = {0, 1, 2};
    split.novel = {3, 4};
    data::save_split(split, dir / "split.json");
    const auto loaded = data::load_split(dir / "split.json");
    CHECK(loaded.base == split.base);
    CHECK(loaded.novel == split.novel);

    data::DatasetSplit overlapping;
    overlapping.base = {0, 1};
    overlapping.novel = {1, 2};
    CHECK_THROWS_AS(data::validate_split(overlapping), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic generator: noiseless identity mixing") {
    data::SyntheticSpec spec;
    spec.num_categories = 3;
    spec.latent_dim = 4;
    spec.visual_dim = 4;
    spec.semantic_dim = 4;
    spec.samples_per_category = 5;
    spec.visual_noise = 0.0;
    spec.semantic_noise = 0.0;
    spec.teacher_visual_noise = 0.0;
    spec.seed = 3;
    num::Matrix identity(4, 4);
    for (std::size_t i = 0; i < 4; ++i) identity(i, i) = 1.0;
    spec.mixing_visual = identity;
    spec.mixing_semantic = identity;

    const auto out = data::generate_synthetic(spec);
    for (std::size_t r = 0; r < out.student_visual.num_rows(); ++r) {
        const auto u = out.student_visual.row(r);
        const auto t = out.teacher_text.category_row(out.student_visual.label(r));
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(u[i] == doctest::Approx(t[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("synthetic generator is deterministic per seed") {
    data::SyntheticSpec spec;
    spec.seed = 77;
    const auto a = data::generate_synthetic(spec);
    const auto b = data::generate_synthetic(spec);
    CHECK(a.student_visual == b.student_visual);
    CHECK(a.teacher_visual == b.teacher_visual);
    CHECK(a.teacher_text == b.teacher_text);

    spec.seed = 78;
    const auto c = data::generate_synthetic(spec);
    CHECK_FALSE(a.student_visual == c.student_visual);
}

TEST_CASE("synthetic data is separable by nearest descriptor") {
    // shared identity mixing puts visual rows and descriptors in one space,
    // so the brute-force oracle can score the visual rows directly
    data::SyntheticSpec spec;
    spec.num_categories = 10;
    spec.latent_dim = 8;
    spec.visual_dim = 8;
    spec.semantic_dim = 8;
    spec.samples_per_category = 20;
    spec.visual_noise = 0.1;
    spec.semantic_noise = 0.0;
    spec.seed = 2024;
    num::Matrix identity(8, 8);
    for (std::size_t i = 0; i < 8; ++i) identity(i, i) = 1.0;
    spec.mixing_visual = identity;
    spec.mixing_semantic = identity;
    const auto out = data::generate_synthetic(spec);

    const double acc = nearest_descriptor_accuracy(out.student_visual, out.teacher_text);
    CHECK(acc >= 0.95);
    // observed on the frozen seed; regression fixture
    CHECK(acc == doctest::Approx(1.0));
}

TEST_CASE("visual noise degrades oracle accuracy monotonically") {
    double prev = 2.0;
    for (double noise : {0.05, 0.6, 2.5}) {
        data::SyntheticSpec spec;
        spec.num_categories = 10;
        spec.samples_per_category = 20;
        spec.teacher_visual_noise = noise;
        spec.seed = 99;
        const auto out = data::generate_synthetic(spec);
        const double acc = nearest_descriptor_accuracy(out.teacher_visual, out.teacher_text);
        CHECK(acc < prev);
        prev = acc;
    }
}

TEST_CASE("episode sampler obeys the protocol") {
    data::SyntheticSpec spec;
    spec.num_categories = 8;
    spec.samples_per_category = 20;
    spec.seed = 5;
    const auto out = data::generate_synthetic(spec);
    std::vector<std::uint32_t> pool = {0, 1, 2, 3, 4, 5, 6, 7};

    const auto ep = data::sample_episode(out.student_visual, pool, 5, 1, 15, rng::derive_stream(1, 0));
    CHECK(ep.support.size() == 5);
    CHECK(ep.query.size() == 75);

    const auto ep5 = data::sample_episode(out.student_visual, pool, 5, 5, 15, rng::derive_stream(1, 1));
    CHECK(ep5.support.size() == 25);
    CHECK(ep5.query.size() == 75);

    // disjoint indices, exactly K/Q per label
    for (std::uint64_t idx = 0; idx < 200; ++idx) {
        const auto e = data::sample_episode(out.student_visual, pool, 5, 3, 7,
                                            rng::derive_stream(42, idx));
        std::set<std::size_t> support_rows, query_rows;
        std::vector<std::size_t> support_hist(5, 0), query_hist(5, 0);
        for (const auto& [row, label] : e.support) {
            support_rows.insert(row);
            support_hist[label]++;
        }
        for (const auto& [row, label] : e.query) {
            query_rows.insert(row);
            query_hist[label]++;
        }
        CHECK(support_rows.size() == e.support.size());
        CHECK(query_rows.size() == e.query.size());
        for (std::size_t row : query_rows) CHECK(support_rows.count(row) == 0);
        for (std::size_t l = 0; l < 5; ++l) {
            CHECK(support_hist[l] == 3);
            CHECK(query_hist[l] == 7);
        }
        // labels must remap onto the drawn categories
        for (const auto& [row, label] : e.support) {
            CHECK(out.student_visual.label(row) == e.category_ids[label]);
        }
    }
}

TEST_CASE("episode sampler error paths") {
    data::SyntheticSpec spec;
    spec.num_categories = 4;
    spec.samples_per_category = 3;
    spec.seed = 6;
    const auto out = data::generate_synthetic(spec);

    try {
        data::sample_episode(out.student_visual, {0, 1, 2, 3}, 2, 2, 2, 1);
        FAIL("expected InsufficientSamples");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InsufficientSamples);
    }

    try {
        data::sample_episode(out.student_visual, {0, 1}, 3, 1, 1, 1);
        FAIL("expected InsufficientCategories");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InsufficientCategories);
    }
}

TEST_CASE("episode sampling is a pure function of the stream seed") {
    data::SyntheticSpec spec;
    spec.seed = 9;
    const auto out = data::generate_synthetic(spec);
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 0; i < 10; ++i) pool.push_back(i);

    const auto a = data::sample_episode(out.student_visual, pool, 5, 1, 15, rng::derive_stream(3, 17));
    const auto b = data::sample_episode(out.student_visual, pool, 5, 1, 15, rng::derive_stream(3, 17));
    CHECK(a.support == b.support);
    CHECK(a.query == b.query);
    CHECK(a.category_ids == b.category_ids);

    const auto c = data::sample_episode(out.student_visual, pool, 5, 1, 15, rng::derive_stream(3, 18));
    CHECK((a.support != c.support || a.query != c.query || a.category_ids != c.category_ids));
}

TEST_SUITE_END();
