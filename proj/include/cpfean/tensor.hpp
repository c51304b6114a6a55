#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cpfean/errors.hpp"

namespace cpfean {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major n-d array. A default-constructed Tensor is the "empty"
/// placeholder (no shape, no data) and is rejected by every operation.
template <class Real>
class Tensor {
public:
    std::vector<std::size_t> shape;
    std::vector<Real> data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<Real> d)
        : shape(std::move(s)), data(std::move(d)) {
        require(!shape.empty(), "tensor: shape must be non-empty");
        std::size_t n = 1;
        for (auto e : shape) {
            require(e > 0, "tensor: extents must be positive, got " + shape_string(shape));
            n *= e;
        }
        require(n == data.size(), "tensor: shape " + shape_string(shape) + " does not match data length " +
                                      std::to_string(data.size()));
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return Tensor(std::move(s), std::vector<Real>(n, Real(0)));
    }

    static Tensor full(std::vector<std::size_t> s, Real v) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return Tensor(std::move(s), std::vector<Real>(n, v));
    }

    /// 2-d tensor from nested initializers, for tests and small fixtures.
    static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
        std::size_t r = rows.size();
        std::size_t c = rows.begin()->size();
        std::vector<Real> d;
        d.reserve(r * c);
        for (const auto& row : rows) {
            require(row.size() == c, "tensor: ragged matrix initializer");
            d.insert(d.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(d));
    }

    static Tensor vector_of(std::vector<Real> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }

    bool empty() const { return shape.empty(); }
    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        require(rank() == 2, "tensor: rows() needs rank 2, got " + shape_string(shape));
        return shape[0];
    }
    std::size_t cols() const {
        require(rank() == 2, "tensor: cols() needs rank 2, got " + shape_string(shape));
        return shape[1];
    }

    Real& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    Real at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    Real& operator[](std::size_t i) { return data[i]; }
    Real operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    template <class Other>
    Tensor<Other> cast() const {
        std::vector<Other> d(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) d[i] = static_cast<Other>(data[i]);
        return Tensor<Other>(shape, std::move(d));
    }
};

/// Plain (non-differentiable) cosine similarity matrix, entry (i,j) =
/// a_i . b_j / max(|a_i||b_j|, eps). Used for prominent-fragment selection
/// and reports; the tape has a differentiable twin.
template <class Real>
Tensor<Real> cosine_matrix(const Tensor<Real>& a, const Tensor<Real>& b, Real eps) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(),
            "cosine_matrix: need [p x d] and [q x d], got " + shape_string(a.shape) + " vs " +
                shape_string(b.shape));
    const std::size_t p = a.rows(), q = b.rows(), d = a.cols();
    std::vector<Real> na(p), nb(q);
    for (std::size_t i = 0; i < p; ++i) {
        Real s = 0;
        for (std::size_t k = 0; k < d; ++k) s += a.at(i, k) * a.at(i, k);
        na[i] = std::sqrt(s);
    }
    for (std::size_t j = 0; j < q; ++j) {
        Real s = 0;
        for (std::size_t k = 0; k < d; ++k) s += b.at(j, k) * b.at(j, k);
        nb[j] = std::sqrt(s);
    }
    Tensor<Real> out = Tensor<Real>::zeros({p, q});
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            Real dot = 0;
            for (std::size_t k = 0; k < d; ++k) dot += a.at(i, k) * b.at(j, k);
            out.at(i, j) = dot / std::max(na[i] * nb[j], eps);
        }
    }
    return out;
}

/// First index of the row maximum (ties break to the lowest index).
template <class Real>
std::size_t argmax_in_row(const Tensor<Real>& m, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
        if (m.at(row, j) > m.at(row, best)) best = j;
    return best;
}

} // namespace cpfean
