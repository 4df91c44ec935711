#include "gdc/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gdc {

std::string Shape4::str() const {
    return fmt::format("{}x{}x{}x{}", n, c, h, w);
}

namespace {
int g_num_threads = 0;  // 0 = library default (hardware concurrency)
}

void set_num_threads(int n) {
    g_num_threads = n;
}

int num_threads() {
    return g_num_threads;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape4 shape) {
    return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape4 shape, T value) {
    if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
        throw ValueError(fmt::format("tensor shape must be positive, got {}", shape.str()));
    }
    Tensor t;
    t.shape_ = shape;
    t.st_ = std::make_shared<Storage<T>>();
    t.st_->data.assign(static_cast<std::size_t>(shape.numel()), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape4 shape, std::vector<T> values) {
    if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
        throw ShapeError(fmt::format("data length {} does not match shape {} ({} elements)",
                                     values.size(), shape.str(), shape.numel()));
    }
    Tensor t;
    t.shape_ = shape;
    t.st_ = std::make_shared<Storage<T>>();
    t.st_->data = std::move(values);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return full({1, 1, 1, 1}, value);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.st_ = std::make_shared<Storage<T>>();
    t.st_->data = st_->data;
    return t;
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(st_->data.begin(), st_->data.end(),
                       [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gdc
