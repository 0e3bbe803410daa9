#include "syntrans/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace syntrans::num {

void ensure_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(Errc::CorruptPayload, std::string(what) + " contains a non-finite entry");
        }
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) {
        throw Error(Errc::ShapeMismatch, "matrix shape must be positive in both dimensions");
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows == 0 || cols == 0) {
        throw Error(Errc::ShapeMismatch, "matrix shape must be positive in both dimensions");
    }
    if (data_.size() != rows * cols) {
        throw Error(Errc::ShapeMismatch, "matrix payload size does not match shape");
    }
    ensure_finite(data_, "matrix");
}

void Matrix::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

ProbabilityVector::ProbabilityVector(Vector values) : values_(std::move(values)) {
    double sum = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0)) {
            throw Error(Errc::CorruptPayload, "probability vector has a negative or NaN entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error(Errc::CorruptPayload, "probability vector does not sum to 1");
    }
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw Error(Errc::ShapeMismatch, "dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vector& v) {
    return std::sqrt(dot(v, v));
}

Vector l2_normalize(const Vector& v) {
    const double n = norm(v);
    if (n <= kNormEpsilon) {
        throw Error(Errc::ZeroNorm, "cannot normalize a (near-)zero vector");
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw Error(Errc::ShapeMismatch, "cosine_similarity: length mismatch");
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na <= kNormEpsilon || nb <= kNormEpsilon) {
        throw Error(Errc::ZeroNorm, "cosine_similarity: degenerate input");
    }
    return dot(a, b) / (na * nb);
}

double cosine_distance(const Vector& a, const Vector& b) {
    return 1.0 - cosine_similarity(a, b);
}

ProbabilityVector softmax(const Vector& v, double temperature) {
    if (v.empty()) {
        throw Error(Errc::ShapeMismatch, "softmax: empty input");
    }
    if (!(temperature > 0.0)) {
        throw Error(Errc::ConfigInvalid, "softmax: temperature must be positive");
    }
    const double mx = *std::max_element(v.begin(), v.end());
    Vector out(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp((v[i] - mx) / temperature);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return ProbabilityVector(std::move(out));
}

double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q) {
    if (p.size() != q.size()) {
        throw Error(Errc::ShapeMismatch, "kl_divergence: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue; // 0 * ln(0/q) = 0
        if (q[i] == 0.0) {
            throw Error(Errc::SupportMismatch, "kl_divergence: q vanishes where p has mass");
        }
        s += p[i] * std::log(p[i] / q[i]);
    }
    return s;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h) {
    Vector grad(x.size(), 0.0);
    Vector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        probe[i] = xi + h;
        const double up = f(probe);
        probe[i] = xi - h;
        const double down = f(probe);
        probe[i] = xi;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

Vector matvec(const Matrix& m, const Vector& x) {
    if (x.size() != m.cols()) {
        throw Error(Errc::ShapeMismatch, "matvec: vector length does not match matrix columns");
    }
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x[c];
        out[r] = s;
    }
    return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& y) {
    if (y.size() != m.rows()) {
        throw Error(Errc::ShapeMismatch, "matvec_transposed: vector length does not match matrix rows");
    }
    Vector out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * y[r];
    }
    return out;
}

void add_outer(Matrix& acc, const Vector& u, const Vector& v) {
    if (u.size() != acc.rows() || v.size() != acc.cols()) {
        throw Error(Errc::ShapeMismatch, "add_outer: shape mismatch");
    }
    for (std::size_t r = 0; r < u.size(); ++r) {
        auto row = acc.row(r);
        for (std::size_t c = 0; c < v.size(); ++c) row[c] += u[r] * v[c];
    }
}

Vector l2_normalize_backward(const Vector& x, const Vector& upstream) {
    if (x.size() != upstream.size()) {
        throw Error(Errc::ShapeMismatch, "l2_normalize_backward: length mismatch");
    }
    const double n = norm(x);
    if (n <= kNormEpsilon) {
        throw Error(Errc::ZeroNorm, "l2_normalize_backward: degenerate input");
    }
    const double proj = dot(upstream, x) / (n * n);
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (upstream[i] - proj * x[i]) / n;
    }
    return out;
}

std::pair<Vector, Vector> cosine_similarity_backward(const Vector& a, const Vector& b,
                                                     double upstream) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na <= kNormEpsilon || nb <= kNormEpsilon) {
        throw Error(Errc::ZeroNorm, "cosine_similarity_backward: degenerate input");
    }
    const double ab = dot(a, b);
    Vector da(a.size());
    Vector db(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        da[i] = upstream * (b[i] / (na * nb) - ab * a[i] / (na * na * na * nb));
        db[i] = upstream * (a[i] / (na * nb) - ab * b[i] / (nb * nb * nb * na));
    }
    return {std::move(da), std::move(db)};
}

Vector scaled(const Vector& v, double s) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
    return out;
}

void axpy(Vector& acc, double s, const Vector& v) {
    if (acc.size() != v.size()) {
        throw Error(Errc::ShapeMismatch, "axpy: length mismatch");
    }
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += s * v[i];
}

} // namespace syntrans::num
