#include "atxf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace atxf {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        out[i] = da == 1 ? db : da;
    }
    return out;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    for (auto d : shape_)
        if (d == 0) throw DimensionError("zero-sized dimension in " + to_string(shape_));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_)
        if (d == 0) throw DimensionError("zero-sized dimension in " + to_string(shape_));
    if (data_.size() != numel(shape_))
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape_));
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size())
        throw DimensionError("index rank " + std::to_string(index.size()) + " for shape " + to_string(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw DimensionError("index out of range for shape " + to_string(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
    return data_[offset(index)];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    return data_[offset(index)];
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff shapes " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    T worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

template class Tensor<float>;
template class Tensor<double>;
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace atxf
