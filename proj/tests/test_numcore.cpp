#include <doctest.h>

#include <cmath>

#include "syntrans/numcore.hpp"
#include "syntrans/rng.hpp"

using namespace syntrans;
using num::Vector;

namespace {

Vector random_unit(std::mt19937_64& eng, std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = rng::normal(eng);
    return num::l2_normalize(v);
}

} // namespace

TEST_SUITE_BEGIN("numcore");

TEST_CASE("l2_normalize basic values") {
    const Vector a = num::l2_normalize({3.0, 4.0});
    CHECK(a[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(0.8).epsilon(1e-12));

    const Vector b = num::l2_normalize({1.0, 0.0, 0.0});
    CHECK(b[0] == 1.0);
    CHECK(b[1] == 0.0);

    CHECK_THROWS_AS(num::l2_normalize({0.0, 0.0}), Error);
    try {
        num::l2_normalize({0.0, 0.0});
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroNorm);
    }
}

TEST_CASE("l2_normalize output has unit norm and keeps direction") {
    auto eng = rng::make_engine(7);
    for (int i = 0; i < 50; ++i) {
        Vector v(8);
        for (double& x : v) x = rng::uniform(eng, -100.0, 100.0);
        if (num::norm(v) <= 1e-6) continue;
        const Vector u = num::l2_normalize(v);
        CHECK(std::abs(num::norm(u) - 1.0) < 1e-9);
        CHECK(num::cosine_similarity(u, v) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cosine similarity known values") {
    CHECK(num::cosine_similarity({1, 0}, {1, 0}) == doctest::Approx(1.0));
    CHECK(num::cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(num::cosine_similarity({1, 2}, {2, 4}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(num::cosine_similarity({0, 0}, {1, 0}), Error);
}

TEST_CASE("cosine similarity is scale invariant and symmetric") {
    auto eng = rng::make_engine(11);
    for (int i = 0; i < 100; ++i) {
        const Vector a = random_unit(eng, 6);
        const Vector b = random_unit(eng, 6);
        const double alpha = rng::uniform(eng, 0.01, 50.0);
        const double beta = rng::uniform(eng, 0.01, 50.0);
        const double base = num::cosine_similarity(a, b);
        CHECK(std::abs(num::cosine_similarity(num::scaled(a, alpha), num::scaled(b, beta)) - base) < 1e-9);
        CHECK(std::abs(num::cosine_similarity(b, a) - base) < 1e-12);
    }
}

TEST_CASE("cosine distance known values and exact complement") {
    Vector v{0.3, -0.7, 0.1};
    CHECK(num::cosine_distance(v, v) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(num::cosine_distance({1, 0}, {-1, 0}) == doctest::Approx(2.0));
    CHECK(num::cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0));

    auto eng = rng::make_engine(13);
    for (int i = 0; i < 50; ++i) {
        const Vector a = random_unit(eng, 5);
        const Vector b = random_unit(eng, 5);
        // complement holds exactly: the distance is defined as 1 - similarity
        CHECK(num::cosine_distance(a, b) == 1.0 - num::cosine_similarity(a, b));
    }
}

TEST_CASE("softmax known values") {
    const auto p = num::softmax({0.0, 0.0}, 1.0);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    const auto q = num::softmax({std::log(2.0), 0.0}, 1.0);
    CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const auto r = num::softmax({10.0, 10.0, 10.0}, 5.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and validity on large inputs") {
    auto eng = rng::make_engine(17);
    for (int i = 0; i < 100; ++i) {
        Vector v(7);
        for (double& x : v) x = rng::uniform(eng, -1e4, 1e4);
        const double tau = rng::uniform(eng, 0.1, 8.0);
        const double shift = rng::uniform(eng, -1e4, 1e4);
        Vector shifted = v;
        for (double& x : shifted) x += shift;
        const auto a = num::softmax(v, tau);        // construction validates the invariant
        const auto b = num::softmax(shifted, tau);
        double sum = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k] >= 0.0);
            sum += a[k];
            CHECK(std::abs(a[k] - b[k]) < 1e-9);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("kl divergence known values") {
    const num::ProbabilityVector same({0.3, 0.7});
    CHECK(num::kl_divergence(same, same) == doctest::Approx(0.0).epsilon(1e-15));

    const num::ProbabilityVector point({1.0, 0.0});
    const num::ProbabilityVector half({0.5, 0.5});
    CHECK(num::kl_divergence(point, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(num::kl_divergence(half, point), Error);
    try {
        num::kl_divergence(half, point);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SupportMismatch);
    }
}

TEST_CASE("kl divergence nonnegative, zero only at identity") {
    auto eng = rng::make_engine(19);
    for (int i = 0; i < 200; ++i) {
        Vector raw_p(6), raw_q(6);
        for (double& x : raw_p) x = rng::uniform(eng, -3.0, 3.0);
        for (double& x : raw_q) x = rng::uniform(eng, -3.0, 3.0);
        const auto p = num::softmax(raw_p, 1.0);
        const auto q = num::softmax(raw_q, 1.0);
        CHECK(num::kl_divergence(p, q) >= 0.0);
        CHECK(num::kl_divergence(p, p) < 1e-12);
    }
}

TEST_CASE("finite differences recover simple analytic gradients") {
    const auto sq_norm = [](const Vector& x) { return num::dot(x, x); };
    const Vector g = num::finite_difference_gradient(sq_norm, {1.0, 2.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-6));

    const auto constant = [](const Vector&) { return 3.5; };
    for (double v : num::finite_difference_gradient(constant, {0.2, -0.4, 1.0}, 1e-5)) {
        CHECK(v == doctest::Approx(0.0));
    }
}

TEST_CASE("finite differences match the hand-derived cosine gradient") {
    // d/dx [1 - cos(x, a)] = -(a/(|x||a|) - (x.a) x/(|x|^3 |a|))
    const Vector a{1.0, 0.0};
    const Vector x{0.6, 0.8};
    const auto f = [&](const Vector& v) { return num::cosine_distance(v, a); };
    const Vector fd = num::finite_difference_gradient(f, x, 1e-5);

    const double nx = num::norm(x);
    const double na = num::norm(a);
    const double xa = num::dot(x, a);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double analytic = -(a[i] / (nx * na) - xa * x[i] / (nx * nx * nx * na));
        CHECK(fd[i] == doctest::Approx(analytic).epsilon(1e-6));
    }

    // and the packaged backward helper agrees with both
    const auto [dx, da] = num::cosine_similarity_backward(x, a, -1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(dx[i] == doctest::Approx(fd[i]).epsilon(1e-6));
    }
    (void)da;
}

TEST_CASE("cosine backward covers both arguments") {
    auto eng = rng::make_engine(23);
    for (int i = 0; i < 20; ++i) {
        Vector a(5), b(5);
        for (double& x : a) x = rng::uniform(eng, -2.0, 2.0);
        for (double& x : b) x = rng::uniform(eng, -2.0, 2.0);
        if (num::norm(a) < 0.1 || num::norm(b) < 0.1) continue;
        const double up = rng::uniform(eng, -2.0, 2.0);
        const auto [da, db] = num::cosine_similarity_backward(a, b, up);
        const Vector fd_a = num::finite_difference_gradient(
            [&](const Vector& v) { return up * num::cosine_similarity(v, b); }, a, 1e-6);
        const Vector fd_b = num::finite_difference_gradient(
            [&](const Vector& v) { return up * num::cosine_similarity(a, v); }, b, 1e-6);
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(da[k] == doctest::Approx(fd_a[k]).epsilon(1e-5));
            CHECK(db[k] == doctest::Approx(fd_b[k]).epsilon(1e-5));
        }
    }
}

TEST_CASE("normalize backward matches finite differences") {
    auto eng = rng::make_engine(29);
    for (int i = 0; i < 20; ++i) {
        Vector x(6), g(6);
        for (double& v : x) v = rng::uniform(eng, -2.0, 2.0);
        for (double& v : g) v = rng::uniform(eng, -1.0, 1.0);
        if (num::norm(x) < 0.1) continue;
        const Vector grad = num::l2_normalize_backward(x, g);
        const Vector fd = num::finite_difference_gradient(
            [&](const Vector& v) { return num::dot(g, num::l2_normalize(v)); }, x, 1e-6);
        for (std::size_t k = 0; k < x.size(); ++k) {
            CHECK(grad[k] == doctest::Approx(fd[k]).epsilon(1e-5));
        }
    }
}

TEST_CASE("matrix shape checks") {
    CHECK_THROWS_AS(num::Matrix(0, 3), Error);
    CHECK_THROWS_AS(num::Matrix(2, 2, {1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(num::Matrix(1, 2, {1.0, std::nan("")}), Error);

    num::Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
    const Vector y = num::matvec(m, {1.0, 1.0, 1.0});
    CHECK(y[0] == doctest::Approx(6.0));
    CHECK(y[1] == doctest::Approx(15.0));
    const Vector z = num::matvec_transposed(m, {1.0, 1.0});
    CHECK(z[0] == doctest::Approx(5.0));
    CHECK(z[2] == doctest::Approx(9.0));
}

TEST_SUITE_END();
