#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "atxf/errors.hpp"

namespace atxf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
// Row-major element strides for `shape`.
std::vector<std::size_t> strides_of(const Shape& shape);
// Numpy-style broadcast of two shapes; throws DimensionError naming both.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Dense row-major tensor. A value type: copying copies the data.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }
    static Tensor from(Shape shape, std::initializer_list<T> values) {
        return Tensor(std::move(shape), std::vector<T>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::initializer_list<std::size_t> index);
    T at(std::initializer_list<std::size_t> index) const;

    // Scalar value of a one-element tensor.
    T item() const;

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<T> data_;
};

// Largest absolute element-wise difference; shapes must match.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace atxf
