#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "gdc/errors.hpp"
#include "gdc/tensor.hpp"

namespace gdc {

// Ordered record of executed differentiable operations. Ops append one node
// per call in execution order; replaying the nodes in reverse is a valid
// topological order, so backward() accumulates gradients for every tensor
// reachable from the loss. Accumulation is additive: a tensor consumed twice
// receives the sum of both contributions. Single-owner, single-threaded.
template <typename T>
class GradTape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
    void backward(Tensor<T> loss) {
        if (loss.numel() != 1) {
            throw ShapeError("backward expects a scalar loss, got shape " + loss.shape().str());
        }
        loss.ensure_grad();
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {
template <typename T>
inline GradTape<T>*& tape_slot() {
    thread_local GradTape<T>* slot = nullptr;
    return slot;
}
}  // namespace detail

// Tape currently recording on this thread, or nullptr (inference mode).
template <typename T>
inline GradTape<T>* current_tape() {
    return detail::tape_slot<T>();
}

// RAII activation of a tape. Ops record onto the innermost active tape.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(GradTape<T>& tape) : prev_(detail::tape_slot<T>()) {
        detail::tape_slot<T>() = &tape;
    }
    ~TapeScope() { detail::tape_slot<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradTape<T>* prev_;
};

}  // namespace gdc
