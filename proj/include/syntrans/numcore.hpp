#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "syntrans/error.hpp"

namespace syntrans::num {

using Vector = std::vector<double>;

// Norm guard: anything at or below this counts as a zero vector.
inline constexpr double kNormEpsilon = 1e-12;

void ensure_finite(std::span<const double> values, const char* what);

// Dense row-major matrix. The checked constructor rejects non-finite entries
// and degenerate shapes; the shape-only constructor zero-fills.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    Vector row_vector(std::size_t r) const { return Vector(row(r).begin(), row(r).end()); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Nonnegative entries summing to one (within 1e-9). Softmax output type.
class ProbabilityVector {
public:
    explicit ProbabilityVector(Vector values);

    const Vector& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    Vector values_;
};

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);

Vector l2_normalize(const Vector& v);
double cosine_similarity(const Vector& a, const Vector& b);
double cosine_distance(const Vector& a, const Vector& b);

ProbabilityVector softmax(const Vector& v, double temperature);
double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h. Gradient oracle for
// every trainable graph in the pipeline.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h);

Vector matvec(const Matrix& m, const Vector& x);            // m * x
Vector matvec_transposed(const Matrix& m, const Vector& y); // m^T * y
void add_outer(Matrix& acc, const Vector& u, const Vector& v); // acc += u v^T

// Backward helpers shared by the hand-derived training graphs.
//
// Gradient of normalize(x) applied to an upstream gradient g:
//   d/dx [x / |x|] . g  =  (g - (g . x_hat) x_hat) / |x|
Vector l2_normalize_backward(const Vector& x, const Vector& upstream);

// Gradients of upstream * cosine_similarity(a, b) w.r.t. a and b.
std::pair<Vector, Vector> cosine_similarity_backward(const Vector& a, const Vector& b,
                                                     double upstream);

Vector scaled(const Vector& v, double s);
void axpy(Vector& acc, double s, const Vector& v); // acc += s * v

} // namespace syntrans::num
