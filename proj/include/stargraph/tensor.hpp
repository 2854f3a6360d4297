#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stargraph/util.hpp"

namespace stargraph {

/// Dense row-major tensor. Production code instantiates S = float (the
/// 32-bit storage contract); the gradient checker instantiates the same op
/// templates with S = double.
template <typename S>
struct TensorT {
    std::vector<std::int64_t> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<std::int64_t> shp) : shape(std::move(shp)), data(count(shape), S(0)) {}

    static std::size_t count(const std::vector<std::int64_t>& shp) {
        std::size_t n = 1;
        for (const auto d : shp) {
            if (d < 0) fail("negative tensor extent");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static TensorT zeros(std::vector<std::int64_t> shp) { return TensorT(std::move(shp)); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (const auto v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

/// Learnable array: value plus an accumulated gradient of the same shape.
/// Shapes are fixed at construction; grads are zeroed at the start of every
/// optimizer step.
template <typename S>
struct ParameterT {
    std::string name;
    TensorT<S> value;
    TensorT<S> grad;

    ParameterT() = default;
    ParameterT(std::string n, TensorT<S> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { grad.fill(S(0)); }
    std::int64_t numel() const { return value.numel(); }
};

using Tensor = TensorT<float>;
using Parameter = ParameterT<float>;

}  // namespace stargraph
