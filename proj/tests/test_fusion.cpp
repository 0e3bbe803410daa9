#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "syntrans/fusion.hpp"
#include "test_support.hpp"

using namespace syntrans;
using num::Vector;

namespace {

fusion::FusionHeads small_heads(std::uint64_t seed, std::size_t d_v, std::size_t d_s,
                                std::size_t hidden) {
    return fusion::init_heads(d_v, d_s, hidden, seed);
}

// Synthetic setup shared by the meta-training tests: informative semantics,
// noisy visual samples, identity mixing so all spaces coincide.
struct Pipeline {
    data::SyntheticData synth;
    synmine::SemanticDescriptorSet descriptors;
    vsbird::DualAutoencoder bridge;
    distill::Projector projector;
};

Pipeline make_pipeline(std::uint64_t seed) {
    data::SyntheticSpec spec;
    spec.num_categories = 10;
    spec.latent_dim = 4;
    spec.visual_dim = 12;
    spec.semantic_dim = 12;
    spec.samples_per_category = 25;
    spec.visual_noise = 0.35;
    spec.semantic_noise = 0.01;
    spec.teacher_visual_noise = 0.05;
    spec.seed = seed;
    Pipeline p;
    p.synth = data::generate_synthetic(spec);

    std::vector<synmine::SemanticDescriptor> items;
    for (const auto& cat : p.synth.teacher_text.categories()) {
        synmine::SemanticDescriptor item;
        item.id = cat.id;
        item.vector = num::l2_normalize(p.synth.teacher_text.category_row(cat.id));
        items.push_back(std::move(item));
    }
    p.descriptors = synmine::SemanticDescriptorSet(std::move(items));

    // bridge trained on true class-mean pairs (visual mean vs descriptor)
    vsbird::BridgePairset pairs;
    for (const auto& cat : p.synth.student_visual.categories()) {
        std::vector<Vector> rows;
        for (std::size_t r : p.synth.student_visual.rows_of_category(cat.id)) {
            rows.push_back(p.synth.student_visual.row(r));
        }
        pairs.category_ids.push_back(cat.id);
        pairs.visual_weights.push_back(fusion::compute_prototype(rows));
        pairs.descriptors.push_back(p.descriptors.by_id(cat.id).vector);
    }
    vsbird::BridgeConfig bridge_cfg;
    bridge_cfg.epochs = 50;
    bridge_cfg.lr = 0.05;
    bridge_cfg.latent_dim = 16;
    bridge_cfg.seed = seed + 1;
    p.bridge = vsbird::train_bridge(pairs, bridge_cfg);

    // identity-mixing: the projector can start as the identity map
    p.projector.first = nn::AffineLayer(12, 12, /*with_bias=*/false);
    p.projector.second = nn::AffineLayer(12, 12, /*with_bias=*/false);
    for (std::size_t i = 0; i < 12; ++i) {
        p.projector.first.weight()(i, i) = 1.0;
        p.projector.second.weight()(i, i) = 1.0;
    }
    return p;
}

} // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("prototype from support features") {
    CHECK(fusion::compute_prototype({{0.6, 0.8}}) == Vector{0.6, 0.8});

    const Vector two = fusion::compute_prototype({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(two[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    try {
        fusion::compute_prototype({{1.0, 0.0}, {-1.0, 0.0}});
        FAIL("expected ZeroNorm");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroNorm);
    }
}

TEST_CASE("gate coefficient") {
    fusion::FusionHeads heads;
    heads.gate = nn::AffineLayer(3, 1); // zero weights -> sigmoid(0)
    CHECK(fusion::gate_coefficient(heads, {0.5, -0.5, 1.0}) == doctest::Approx(0.5));

    heads.gate.weight()(0, 0) = 100.0;
    CHECK(fusion::gate_coefficient(heads, {1.0, 0.0, 0.0}) > 0.999999);
    CHECK(fusion::gate_coefficient(heads, {1.0, 0.0, 0.0}) < 1.0); // strictly inside (0,1)

    auto eng = rng::make_engine(3);
    fusion::FusionHeads random = small_heads(77, 4, 4, 8);
    for (int i = 0; i < 20; ++i) {
        Vector x(4);
        for (double& v : x) v = rng::uniform(eng, -3.0, 3.0);
        const double beta = fusion::gate_coefficient(random, x);
        CHECK(beta > 0.0);
        CHECK(beta < 1.0);
        // matches a hand-composed forward
        double pre = random.gate.bias()[0];
        for (std::size_t j = 0; j < 4; ++j) pre += random.gate.weight()(0, j) * x[j];
        CHECK(beta == doctest::Approx(1.0 / (1.0 + std::exp(-pre))).epsilon(1e-12));
    }
}

TEST_CASE("visual dominated weight blends and renormalizes") {
    const Vector semantic{1.0, 0.0};
    const Vector proto{0.0, 1.0};
    const Vector at_zero = fusion::visual_dominated_weight(0.0, semantic, proto);
    CHECK(at_zero == proto);
    const Vector at_one = fusion::visual_dominated_weight(1.0, semantic, proto);
    CHECK(at_one == semantic);
    const Vector mid = fusion::visual_dominated_weight(0.5, semantic, proto);
    CHECK(mid[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(mid[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(fusion::visual_dominated_weight(0.5, {1.0, 0.0, 0.0}, proto), Error);
}

TEST_CASE("direction of the blend ignores positive rescaling of the inputs") {
    auto eng = rng::make_engine(5);
    for (int i = 0; i < 20; ++i) {
        Vector a(5), b(5);
        for (double& v : a) v = rng::normal(eng);
        for (double& v : b) v = rng::normal(eng);
        a = num::l2_normalize(a);
        b = num::l2_normalize(b);
        const double beta = rng::uniform(eng, 0.05, 0.95);
        const Vector base = fusion::visual_dominated_weight(beta, a, b);
        // pre-normalized inputs mean the output is already scale-canonical
        CHECK(std::abs(num::norm(base) - 1.0) < 1e-9);
        const Vector again = fusion::visual_dominated_weight(beta, a, b);
        CHECK(base == again);
    }
}

TEST_CASE("semantic dominated weight: averaging construction and collapse") {
    // hand-built averaging maps: hidden = (t + w')/2 entrywise, output = hidden
    const std::size_t d = 3;
    fusion::FusionHeads heads;
    heads.gate = nn::AffineLayer(d, 1);
    heads.recon1 = nn::AffineLayer(2 * d, d);
    heads.recon2 = nn::AffineLayer(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        heads.recon1.weight()(i, i) = 0.5;
        heads.recon1.weight()(i, d + i) = 0.5;
        heads.recon2.weight()(i, i) = 1.0;
    }
    const Vector t{0.8, 0.6, 0.0};
    const Vector w{0.0, 0.6, 0.8};
    const Vector out = fusion::semantic_dominated_weight(heads, t, w);
    const Vector mean_dir = num::l2_normalize({0.4, 0.6, 0.4});
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(out[i] == doctest::Approx(mean_dir[i]).epsilon(1e-12));
    }

    // zero output map collapses
    fusion::FusionHeads dead = heads;
    dead.recon2.weight().fill(0.0);
    try {
        fusion::semantic_dominated_weight(dead, t, w);
        FAIL("expected ZeroNorm");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroNorm);
    }

    // random heads match a hand-composed two-layer forward
    auto eng = rng::make_engine(9);
    fusion::FusionHeads rnd = small_heads(31, d, d, 7);
    Vector tt(d), ww(d);
    for (double& v : tt) v = rng::normal(eng);
    for (double& v : ww) v = rng::normal(eng);
    tt = num::l2_normalize(tt);
    ww = num::l2_normalize(ww);
    const Vector got = fusion::semantic_dominated_weight(rnd, tt, ww);
    Vector joint(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        joint[i] = tt[i];
        joint[d + i] = ww[i];
    }
    Vector hidden = num::matvec(rnd.recon1.weight(), joint);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i] += rnd.recon1.bias()[i];
        hidden[i] = hidden[i] > 0 ? hidden[i] : 0.01 * hidden[i];
    }
    Vector raw = num::matvec(rnd.recon2.weight(), hidden);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += rnd.recon2.bias()[i];
    const Vector expect = num::l2_normalize(raw);
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("episode probabilities pick out matching columns") {
    distill::Projector projector;
    projector.first = nn::AffineLayer(3, 3, false);
    projector.second = nn::AffineLayer(3, 3, false);
    for (std::size_t i = 0; i < 3; ++i) {
        projector.first.weight()(i, i) = 1.0;
        projector.second.weight()(i, i) = 1.0;
    }

    fusion::MultimodalClassifier clf;
    clf.visual_weights = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    clf.semantic_weights = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    const auto [p_v, p_s] = fusion::episode_probabilities(clf, {0.0, 1.0, 0.0}, projector);
    CHECK(p_v[1] > p_v[0]);
    CHECK(p_v[1] > p_v[2]);
    CHECK(p_s[1] > p_s[0]);

    // identical columns -> uniform
    fusion::MultimodalClassifier flat;
    flat.visual_weights = {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    flat.semantic_weights = {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    const auto [q_v, q_s] = fusion::episode_probabilities(flat, {0.3, 0.9, 0.1}, projector);
    for (std::size_t m = 0; m < 3; ++m) {
        CHECK(q_v[m] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(q_s[m] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("fused predict: lambda policy and degenerate columns") {
    distill::Projector projector;
    projector.first = nn::AffineLayer(2, 2, false);
    projector.second = nn::AffineLayer(2, 2, false);
    for (std::size_t i = 0; i < 2; ++i) {
        projector.first.weight()(i, i) = 1.0;
        projector.second.weight()(i, i) = 1.0;
    }
    fusion::MultimodalClassifier clf;
    clf.visual_weights = {{1, 0}, {0, 1}};
    clf.semantic_weights = {{0, 1}, {0, 1}}; // identical: contributes a constant

    // identical W_S columns: the W_V term decides alone
    CHECK(fusion::fused_predict(clf, {0.9, 0.1}, projector, 1.0) == 0);
    CHECK(fusion::fused_predict(clf, {0.1, 0.9}, projector, 5.0) == 1);
    CHECK_THROWS_AS(fusion::fused_predict(clf, {1.0, 0.0}, projector, 0.0), Error);

    // argmax invariance as lambda -> 0+ against the pure W_V argmax
    auto eng = rng::make_engine(21);
    for (int i = 0; i < 30; ++i) {
        fusion::MultimodalClassifier random_clf;
        for (int m = 0; m < 4; ++m) {
            Vector v(2), s(2);
            for (double& x : v) x = rng::normal(eng);
            for (double& x : s) x = rng::normal(eng);
            random_clf.visual_weights.push_back(num::l2_normalize(v));
            random_clf.semantic_weights.push_back(num::l2_normalize(s));
        }
        Vector q(2);
        for (double& x : q) x = rng::normal(eng);
        q = num::l2_normalize(q);
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t m = 0; m < 4; ++m) {
            const double s = num::cosine_similarity(q, random_clf.visual_weights[m]);
            if (s > best_score) {
                best_score = s;
                best = m;
            }
        }
        CHECK(fusion::fused_predict(random_clf, q, projector, 1e-9) == best);
    }
}

TEST_CASE("gradients through G and R match finite differences") {
    auto eng = rng::make_engine(33);
    const std::size_t d = 8;
    const std::size_t n = 3;

    for (int instance = 0; instance < 3; ++instance) {
        fusion::FusionHeads heads = small_heads(500 + instance, d, d, 8);
        // inputs: per class, unit semantic-derived / prototype / descriptor /
        // visual-derived vectors, one query with a label
        std::vector<Vector> semantic_derived(n), prototypes(n), descriptor(n), visual_derived(n);
        for (std::size_t m = 0; m < n; ++m) {
            auto unit = [&] {
                Vector v(d);
                for (double& x : v) x = rng::normal(eng);
                return num::l2_normalize(v);
            };
            semantic_derived[m] = unit();
            prototypes[m] = unit();
            descriptor[m] = unit();
            visual_derived[m] = unit();
        }
        Vector query(d), projected(d);
        for (double& x : query) x = rng::normal(eng);
        query = num::l2_normalize(query);
        for (double& x : projected) x = rng::normal(eng);
        projected = num::l2_normalize(projected);
        const std::size_t label = 1;

        const auto sigmoid = nn::Activation::sigmoid();
        const auto leaky = nn::Activation::leaky_relu(heads.leaky_slope);
        const auto ident = nn::Activation::identity();

        const auto loss_fn = [&] {
            Vector visual_scores(n), semantic_scores(n);
            for (std::size_t m = 0; m < n; ++m) {
                const double beta = heads.gate.apply(semantic_derived[m], sigmoid)[0];
                Vector combo(d);
                for (std::size_t i = 0; i < d; ++i) {
                    combo[i] = beta * semantic_derived[m][i] + (1.0 - beta) * prototypes[m][i];
                }
                visual_scores[m] = num::cosine_similarity(query, num::l2_normalize(combo));
                const Vector w_s =
                    fusion::semantic_dominated_weight(heads, descriptor[m], visual_derived[m]);
                semantic_scores[m] = num::cosine_similarity(projected, w_s);
            }
            const auto p_v = num::softmax(visual_scores, 1.0);
            const auto p_s = num::softmax(semantic_scores, 1.0);
            return -std::log(p_v[label]) - std::log(p_s[label]);
        };

        // analytic pass mirroring the meta-training backward
        {
            std::vector<double> beta(n);
            std::vector<Vector> combos(n), visual_w(n), joints(n), hiddens(n), raws(n),
                semantic_w(n);
            for (std::size_t m = 0; m < n; ++m) {
                beta[m] = heads.gate.apply(semantic_derived[m], sigmoid)[0];
                combos[m].resize(d);
                for (std::size_t i = 0; i < d; ++i) {
                    combos[m][i] =
                        beta[m] * semantic_derived[m][i] + (1.0 - beta[m]) * prototypes[m][i];
                }
                visual_w[m] = num::l2_normalize(combos[m]);
                joints[m].reserve(2 * d);
                joints[m] = descriptor[m];
                joints[m].insert(joints[m].end(), visual_derived[m].begin(),
                                 visual_derived[m].end());
                hiddens[m] = heads.recon1.apply(joints[m], leaky);
                raws[m] = heads.recon2.apply(hiddens[m], ident);
                semantic_w[m] = num::l2_normalize(raws[m]);
            }
            Vector visual_scores(n), semantic_scores(n);
            for (std::size_t m = 0; m < n; ++m) {
                visual_scores[m] = num::cosine_similarity(query, visual_w[m]);
                semantic_scores[m] = num::cosine_similarity(projected, semantic_w[m]);
            }
            const auto p_v = num::softmax(visual_scores, 1.0);
            const auto p_s = num::softmax(semantic_scores, 1.0);
            for (std::size_t m = 0; m < n; ++m) {
                const double dv = p_v[m] - (m == label ? 1.0 : 0.0);
                const double ds = p_s[m] - (m == label ? 1.0 : 0.0);
                const auto [dq1, dw_v] = num::cosine_similarity_backward(query, visual_w[m], dv);
                (void)dq1;
                const Vector d_combo = num::l2_normalize_backward(combos[m], dw_v);
                double d_beta = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    d_beta += d_combo[i] * (semantic_derived[m][i] - prototypes[m][i]);
                }
                heads.gate.forward(semantic_derived[m], sigmoid);
                heads.gate.backward({d_beta});

                const auto [dq2, dw_s] =
                    num::cosine_similarity_backward(projected, semantic_w[m], ds);
                (void)dq2;
                const Vector d_raw = num::l2_normalize_backward(raws[m], dw_s);
                heads.recon1.forward(joints[m], leaky);
                heads.recon2.forward(hiddens[m], ident);
                heads.recon1.backward(heads.recon2.backward(d_raw));
            }
        }

        const double h = 1e-6;
        const auto probe = [&](double& theta, double analytic) {
            const double saved = theta;
            theta = saved + h;
            const double up = loss_fn();
            theta = saved - h;
            const double down = loss_fn();
            theta = saved;
            const double fd = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
            CHECK(std::abs(fd - analytic) / denom < 1e-5);
        };
        const auto check_layer = [&](nn::AffineLayer& layer) {
            for (std::size_t i = 0; i < layer.weight().data().size(); ++i) {
                probe(layer.weight().data()[i], layer.weight_grad().data()[i]);
            }
            for (std::size_t i = 0; i < layer.bias().size(); ++i) {
                probe(layer.bias()[i], layer.bias_grad()[i]);
            }
        };
        check_layer(heads.gate);
        check_layer(heads.recon1);
        check_layer(heads.recon2);
    }
}

TEST_CASE("confidence interval formula") {
    CHECK(fusion::confidence_interval95({0.8, 0.8, 0.8, 0.8}) == doctest::Approx(0.0));
    // independent recomputation on a fixture vector
    const std::vector<double> acc = {0.91, 0.88, 0.95, 0.79, 0.84, 0.90};
    double mean = 0.0;
    for (double v : acc) mean += v;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double v : acc) var += (v - mean) * (v - mean);
    var /= static_cast<double>(acc.size());
    const double expected = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(acc.size()));
    CHECK(std::abs(fusion::confidence_interval95(acc) - expected) < 1e-15);
}

TEST_CASE("meta-training improves fused accuracy over prototypes alone") {
    const auto p = make_pipeline(61);
    data::DatasetSplit split;
    split.base = {0, 1, 2, 3, 4};
    split.novel = {5, 6, 7, 8, 9};

    fusion::FusionConfig cfg;
    cfg.meta_epochs = 10;
    cfg.episodes_per_epoch = 40;
    cfg.n_way = 5;
    cfg.k_shot = 1;
    cfg.q_queries = 10;
    cfg.lr = 0.003;
    cfg.hidden_dim = 64;
    cfg.seed = 17;

    fusion::MetaTrainStats stats;
    const auto heads = fusion::meta_train(p.synth.student_visual, split.base, p.descriptors,
                                          p.bridge, p.projector, cfg, &stats);
    REQUIRE(stats.epoch_fused_accuracy.size() == 10);
    // recorded on the frozen seed: fused classification on meta queries beats
    // the prototype baseline once the heads have trained
    CHECK(stats.epoch_fused_accuracy.back() > stats.epoch_proto_accuracy.back());

    // zero epochs returns the initialization
    fusion::FusionConfig zero = cfg;
    zero.meta_epochs = 0;
    const auto untouched = fusion::meta_train(p.synth.student_visual, split.base, p.descriptors,
                                              p.bridge, p.projector, zero);
    const auto fresh = fusion::init_heads(12, 12, cfg.hidden_dim, cfg.seed);
    CHECK(untouched.gate.weight() == fresh.gate.weight());
    CHECK(untouched.recon1.weight() == fresh.recon1.weight());

    // determinism: identical checkpoints from identical runs
    const auto dir = std::filesystem::temp_directory_path() / "syntrans_fusion_det";
    std::filesystem::create_directories(dir);
    const auto again = fusion::meta_train(p.synth.student_visual, split.base, p.descriptors,
                                          p.bridge, p.projector, cfg);
    fusion::save_heads(heads, dir / "a.synw");
    fusion::save_heads(again, dir / "b.synw");
    const auto slurp = [](const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(dir / "a.synw") == slurp(dir / "b.synw"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation aggregates, reproduces, and parallelizes deterministically") {
    const auto p = make_pipeline(62);
    data::DatasetSplit split;
    split.base = {0, 1, 2, 3, 4};
    split.novel = {5, 6, 7, 8, 9};

    fusion::FusionConfig cfg;
    cfg.meta_epochs = 3;
    cfg.episodes_per_epoch = 30;
    cfg.k_shot = 1;
    cfg.q_queries = 10;
    cfg.lr = 0.003;
    cfg.hidden_dim = 64;
    cfg.seed = 23;
    const auto heads = fusion::meta_train(p.synth.student_visual, split.base, p.descriptors,
                                          p.bridge, p.projector, cfg);

    const auto result = fusion::evaluate(p.synth.student_visual, split.novel, p.descriptors,
                                         p.bridge, heads, p.projector, 5, 1, 15, 60, 99);
    CHECK(result.per_episode.size() == 60);
    CHECK(result.per_episode_wv.size() == 60);
    CHECK(result.mean_accuracy > 0.0);
    CHECK(result.mean_accuracy <= 100.0);
    CHECK(result.wv_mean_accuracy > 0.0);
    CHECK(result.wv_mean_accuracy <= 100.0);

    const auto again = fusion::evaluate(p.synth.student_visual, split.novel, p.descriptors,
                                        p.bridge, heads, p.projector, 5, 1, 15, 60, 99);
    CHECK(result.per_episode == again.per_episode);
    CHECK(result.mean_accuracy == again.mean_accuracy);
    CHECK(result.ci95 == again.ci95);

    const auto parallel = fusion::evaluate(p.synth.student_visual, split.novel, p.descriptors,
                                           p.bridge, heads, p.projector, 5, 1, 15, 60, 99,
                                           /*lambda=*/0.0, /*raw_dot=*/false, /*workers=*/3);
    CHECK(parallel.per_episode == result.per_episode);
    CHECK(parallel.mean_accuracy == result.mean_accuracy);
}

TEST_SUITE_END();
