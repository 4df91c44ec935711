#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gdc/errors.hpp"

namespace gdc {

enum class Precision { F32, F64 };

// Dense (batch, channels, height, width) shape. Row-major over (n, c, y, x).
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

template <typename T>
struct Storage {
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass touches this tensor
    bool requires_grad = false;
};

// Value-semantic handle to shared dense storage. Copies alias the same
// buffer; operations produce fresh tensors and never mutate their inputs
// (parameter updates and gradient accumulation are the deliberate
// exceptions, owned by the trainer and the tape respectively).
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape4 shape);
    static Tensor full(Shape4 shape, T value);
    static Tensor from_data(Shape4 shape, std::vector<T> values);
    // Scalar wrapped as a 1x1x1x1 tensor.
    static Tensor scalar(T value);

    bool defined() const { return st_ != nullptr; }
    const Shape4& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }

    T* data() { return st_->data.data(); }
    const T* data() const { return st_->data.data(); }
    std::vector<T>& vec() { return st_->data; }
    const std::vector<T>& vec() const { return st_->data; }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        st_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return st_ && !st_->grad.empty(); }
    // Allocates a zero gradient buffer on first use.
    void ensure_grad() {
        if (st_->grad.empty()) st_->grad.assign(st_->data.size(), T(0));
    }
    void zero_grad() {
        if (!st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), T(0));
    }
    T* grad() { return st_->grad.empty() ? nullptr : st_->grad.data(); }
    const T* grad() const { return st_->grad.empty() ? nullptr : st_->grad.data(); }
    std::vector<T>& grad_vec() { return st_->grad; }

    std::int64_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return st_->data[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return st_->data[index(n, c, y, x)]; }

    // Deep copy; the clone is detached (no grad, requires_grad off).
    Tensor clone() const;
    bool all_finite() const;

    // Storage identity, used by graph-topology assertions.
    const void* id() const { return st_.get(); }
    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

private:
    Shape4 shape_{};
    std::shared_ptr<Storage<T>> st_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Thread count for the parallel regions inside ops. Every parallel loop
// writes disjoint outputs with a fixed sequential reduction per element, so
// results are bit-identical for any setting.
void set_num_threads(int n);
int num_threads();

}  // namespace gdc
