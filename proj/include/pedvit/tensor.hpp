#pragma once

// Dense float kernels shared by every model operation. Every reduction runs
// in a fixed left-to-right order so results do not depend on how work is
// split across machines.

#include <pedvit/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pedvit {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    Matrix(std::initializer_list<std::initializer_list<float>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const float& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<float>& data() noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    // i-k-j loop: out(i,j) still accumulates k = 0..inner-1 in order.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        float* dst = out.row(i).data();
        const float* src = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const float s = src[k];
            const float* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) dst[j] += s * brow[j];
        }
    }
    return out;
}

// out = a * b + bias (bias broadcast over rows)
inline Matrix linear(const Matrix& a, const Matrix& weight, std::span<const float> bias) {
    Matrix out = matmul(a, weight);
    if (bias.empty()) return out;
    if (bias.size() != out.cols()) throw ShapeError("linear: bias length mismatch");
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
    return out;
}

inline void softmax_inplace(std::span<float> row) {
    if (row.empty()) return;
    float mx = row[0];
    for (float v : row) {
        if (std::isnan(v)) throw std::domain_error("softmax: NaN input");
        mx = std::max(mx, v);
    }
    float sum = 0.0f;
    for (float& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    const float inv = 1.0f / sum;
    for (float& v : row) v *= inv;
}

inline Matrix softmax_rows(Matrix m) {
    for (std::size_t i = 0; i < m.rows(); ++i) softmax_inplace(m.row(i));
    return m;
}

inline constexpr float kLayerNormEps = 1e-6f;

inline void layer_norm_into(std::span<const float> x, std::span<const float> gamma,
                            std::span<const float> beta, std::span<float> out,
                            float eps = kLayerNormEps) {
    if (x.size() != gamma.size() || x.size() != beta.size() || x.size() != out.size())
        throw ShapeError("layer_norm: length mismatch");
    if (x.empty()) return;
    const auto n = static_cast<float>(x.size());
    float mean = 0.0f;
    for (float v : x) mean += v;
    mean /= n;
    float var = 0.0f;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= n;
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

inline std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma,
                                     std::span<const float> beta, float eps = kLayerNormEps) {
    std::vector<float> out(x.size());
    layer_norm_into(x, gamma, beta, out, eps);
    return out;
}

inline Matrix layer_norm_rows(const Matrix& m, std::span<const float> gamma,
                              std::span<const float> beta, float eps = kLayerNormEps) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) layer_norm_into(m.row(i), gamma, beta, out.row(i), eps);
    return out;
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

} // namespace pedvit
