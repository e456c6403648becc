#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mtkd/errors.hpp"
#include "mtkd/rng.hpp"

namespace mtkd {

/// Dense row-major matrix of doubles. The universal numeric carrier for
/// features, logits, weights, and gradients.
struct Matrix2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix2D() = default;
    Matrix2D(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Matrix2D(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw ShapeError("Matrix2D: data length " + std::to_string(data.size()) +
                             " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix2D& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    Matrix2D row(std::size_t r) const {
        Matrix2D out(1, cols);
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                    out.data.begin());
        return out;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const Matrix2D& a, const Matrix2D& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

inline Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " * " + b.shape_str());
    Matrix2D out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * b.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline Matrix2D transpose(const Matrix2D& a) {
    Matrix2D out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "add");
    Matrix2D out = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Matrix2D sub(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "sub");
    Matrix2D out = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Matrix2D scale(const Matrix2D& a, double s) {
    Matrix2D out = a;
    for (double& v : out.data) v *= s;
    return out;
}

// broadcast a 1xC row onto every row of a
inline Matrix2D add_row_broadcast(const Matrix2D& a, const Matrix2D& row) {
    if (row.rows != 1 || row.cols != a.cols)
        throw ShapeError("add_row_broadcast: expected 1x" + std::to_string(a.cols) +
                         ", got " + row.shape_str());
    Matrix2D out = a;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(i, j) += row.at(0, j);
    return out;
}

inline Matrix2D relu(const Matrix2D& x) {
    Matrix2D out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// upstream passes where the pre-activation was positive
inline Matrix2D relu_backward(const Matrix2D& x, const Matrix2D& upstream) {
    require_same_shape(x, upstream, "relu_backward");
    Matrix2D out = upstream;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        if (x.data[i] <= 0.0) out.data[i] = 0.0;
    return out;
}

/// Row-wise softmax, stabilized by per-row max subtraction.
inline Matrix2D softmax_rows(const Matrix2D& x) {
    if (x.cols < 1) throw ShapeError("softmax_rows: need at least one column");
    Matrix2D out = x;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* row = &out.data[i * x.cols];
        double mx = *std::max_element(row, row + x.cols);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < x.cols; ++j) row[j] /= sum;
    }
    return out;
}

// log arguments are clamped here
constexpr double kLogFloor = 1e-12;

inline Matrix2D log_softmax_rows(const Matrix2D& x) {
    Matrix2D out = x;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* row = &out.data[i * x.cols];
        double mx = *std::max_element(row, row + x.cols);
        double sum = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) sum += std::exp(row[j] - mx);
        double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < x.cols; ++j) row[j] -= lse;
    }
    return out;
}

/// Per-row cross-entropy against integer class labels.
/// loss[i] = -log softmax(logits)[i, label[i]]; grad = softmax - onehot.
inline std::pair<std::vector<double>, Matrix2D> cross_entropy(
    const Matrix2D& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows) + " rows");
    for (std::size_t l : labels)
        if (l >= logits.cols)
            throw IndexError("cross_entropy: label " + std::to_string(l) +
                             " out of range [0, " + std::to_string(logits.cols) + ")");
    Matrix2D logp = log_softmax_rows(logits);
    Matrix2D grad = logits;
    std::vector<double> loss(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        loss[i] = -logp.at(i, labels[i]);
        for (std::size_t j = 0; j < logits.cols; ++j)
            grad.at(i, j) = std::exp(logp.at(i, j)) - (j == labels[i] ? 1.0 : 0.0);
    }
    return {loss, grad};
}

/// Temperature-scaled KL(teacher || student) per row, times tau^2.
/// Gradient is with respect to the student logits; the teacher side is
/// treated as a constant.
inline std::pair<std::vector<double>, Matrix2D> kl_divergence(
    const Matrix2D& student_logits, const Matrix2D& teacher_logits, double temperature) {
    require_same_shape(student_logits, teacher_logits, "kl_divergence");
    if (temperature <= 0.0)
        throw ParameterError("kl_divergence: temperature must be > 0, got " +
                             std::to_string(temperature));
    double tau = temperature;
    Matrix2D logp = log_softmax_rows(scale(teacher_logits, 1.0 / tau));
    Matrix2D logq = log_softmax_rows(scale(student_logits, 1.0 / tau));
    std::vector<double> loss(student_logits.rows, 0.0);
    Matrix2D grad(student_logits.rows, student_logits.cols);
    for (std::size_t i = 0; i < logp.rows; ++i) {
        for (std::size_t j = 0; j < logp.cols; ++j) {
            double p = std::exp(logp.at(i, j));
            double q = std::exp(logq.at(i, j));
            loss[i] += tau * tau * p * (logp.at(i, j) - logq.at(i, j));
            grad.at(i, j) = tau * (q - p);
        }
    }
    return {loss, grad};
}

/// Per-row mean squared error; grad is with respect to `a`.
inline std::pair<std::vector<double>, Matrix2D> mse(const Matrix2D& a,
                                                    const Matrix2D& b) {
    require_same_shape(a, b, "mse");
    std::vector<double> loss(a.rows, 0.0);
    Matrix2D grad(a.rows, a.cols);
    double inv = 1.0 / static_cast<double>(a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            double d = a.at(i, j) - b.at(i, j);
            loss[i] += d * d * inv;
            grad.at(i, j) = 2.0 * d * inv;
        }
    }
    return {loss, grad};
}

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw DegenerateInputError("cosine_similarity: zero-norm vector");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

/// Trainable tensor: value, accumulated gradient, and momentum buffer,
/// all the same shape.
struct ParamTensor {
    Matrix2D value;
    Matrix2D grad;
    Matrix2D momentum_buffer;

    explicit ParamTensor(Matrix2D v)
        : value(std::move(v)),
          grad(value.rows, value.cols),
          momentum_buffer(value.rows, value.cols) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Classical momentum SGD; grads are zeroed after the step.
inline void sgd_step(const std::vector<ParamTensor*>& params, double lr,
                     double momentum, double weight_decay) {
    if (lr <= 0.0) throw ParameterError("sgd_step: lr must be > 0");
    for (ParamTensor* p : params) {
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            double g = p->grad.data[i] + weight_decay * p->value.data[i];
            double& buf = p->momentum_buffer.data[i];
            buf = momentum * buf + g;
            p->value.data[i] -= lr * buf;
        }
        p->zero_grad();
    }
}

/// Central-difference gradient of a scalar function over a parameter set.
/// Test oracle; intentionally independent of any backward pass.
inline std::vector<Matrix2D> finite_diff_grad(
    const std::function<double()>& scalar_fn, const std::vector<ParamTensor*>& params,
    double epsilon = 1e-5) {
    if (epsilon <= 0.0) throw ParameterError("finite_diff_grad: epsilon must be > 0");
    std::vector<Matrix2D> grads;
    grads.reserve(params.size());
    for (ParamTensor* p : params) {
        Matrix2D g(p->value.rows, p->value.cols);
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + epsilon;
            double up = scalar_fn();
            p->value.data[i] = saved - epsilon;
            double down = scalar_fn();
            p->value.data[i] = saved;
            g.data[i] = (up - down) / (2.0 * epsilon);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace mtkd
