#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ngcnn/error.hpp"

namespace ngcnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Row-major dense array. Sequences are [length, channels], feature vectors
// are [size].
template <typename T>
struct Tensor {
    Shape shape{0};
    std::vector<T> values;

    Tensor() = default;

    explicit Tensor(Shape s, T fill = T{0})
      : shape(std::move(s)), values(shape_size(shape), fill)
    {
        if (shape.empty()) {
            throw ArgumentError("tensor shape must have at least one dimension");
        }
    }

    Tensor(Shape s, std::vector<T> v)
      : shape(std::move(s)), values(std::move(v))
    {
        if (shape.empty()) {
            throw ArgumentError("tensor shape must have at least one dimension");
        }
        if (shape_size(shape) != values.size()) {
            throw ArgumentError("tensor of shape " + shape_string(shape) + " cannot hold " +
                                std::to_string(values.size()) + " values");
        }
    }

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    T& operator[](std::size_t i) { return values[i]; }
    const T& operator[](std::size_t i) const { return values[i]; }

    // Element (r, c) of a rank-2 tensor.
    T& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }

    std::span<T> span() { return values; }
    std::span<const T> span() const { return values; }

    void fill(T v) { std::fill(values.begin(), values.end(), v); }

    template <typename U>
    Tensor<U> cast() const
    {
        Tensor<U> out;
        out.shape = shape;
        out.values.assign(values.begin(), values.end());
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Trainable tensor together with its gradient and Adam moments.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;
    std::uint64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(shape), adam_m(shape), adam_v(shape)
    { }
};

}  // namespace ngcnn
