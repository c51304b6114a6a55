#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cpfean/rng.hpp"
#include "cpfean/tensor.hpp"

namespace cpfean {

/// A named learnable tensor with its gradient accumulator.
template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<Real> v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor<Real>::zeros(value.shape)) {}

    void zero_grad() { grad = Tensor<Real>::zeros(value.shape); }
};

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for weight matrices.
template <class Real>
Parameter<Real> make_weight(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<Real> d(fan_in * fan_out);
    for (auto& v : d) v = static_cast<Real>(rng.uniform(-bound, bound));
    return Parameter<Real>(std::move(name), Tensor<Real>({fan_in, fan_out}, std::move(d)));
}

template <class Real>
Parameter<Real> make_gain(std::string name, std::size_t dim) {
    return Parameter<Real>(std::move(name), Tensor<Real>::full({dim}, Real(1)));
}

template <class Real>
Parameter<Real> make_bias(std::string name, std::size_t dim) {
    return Parameter<Real>(std::move(name), Tensor<Real>::zeros({dim}));
}

} // namespace cpfean
