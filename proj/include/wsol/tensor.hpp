#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "wsol/errors.hpp"

namespace wsol {

class Tape;

/// N-dimensional array of doubles in row-major order.
///
/// Copies are shallow: they share the underlying storage. Storage identity
/// (id()) is what the autodiff tape keys gradients on, so a copied tensor
/// and its original accumulate into the same gradient buffer. Values are
/// treated as immutable once a tensor participates in a recorded operation;
/// in-place mutation is reserved for parameter updates between steps.
class Tensor {
  public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<int> shape);

    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    /// New tensor sharing x's storage under a different shape (same element
    /// count). Gradients pass through because buffers key on storage identity.
    static Tensor view(std::vector<int> shape, const Tensor& x) {
        Tensor t = x;
        t.shape_ = std::move(shape);
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_ ? data_->size() : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double value() const;  // scalar tensors only

    // 4-d convenience accessor for [N,C,H,W] tensors. Slow path; hot loops
    // use raw pointers.
    double& at(int n, int c, int y, int x) {
        return (*data_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at(int n, int c, int y, int x) const {
        return (*data_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool v) {
        requires_grad_ = v;
        return *this;
    }

    /// Storage identity used to key gradient buffers.
    const void* id() const { return data_.get(); }

    /// Storage handle; recorded operations capture tensors by value so the
    /// storage outlives the tape entries referring to it.
    const std::shared_ptr<std::vector<double>>& storage() const { return data_; }

  private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
    bool requires_grad_ = false;
};

/// Reverse-mode tape. Constructing a Tape makes it the active tape for the
/// current thread; operations on tensors with requires_grad record backward
/// steps onto it. backward() replays the steps in exact reverse recording
/// order and accumulates gradients keyed by storage identity.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// The active tape of the calling thread, or nullptr.
    static Tape* active();

    /// Record one backward step. Steps run in reverse recording order.
    void record(std::function<void(Tape&)> step);

    /// Run reverse accumulation from a scalar loss. Throws ContractError if
    /// the loss is not scalar and StateError on a second call without any
    /// re-recording in between.
    void backward(const Tensor& loss);

    /// Accumulated gradient for a tensor (zeros if it never received one).
    Tensor grad(const Tensor& t) const;

    /// Gradient buffer for accumulation, created zero-filled on first use.
    double* grad_acc(const Tensor& t);

    /// Existing gradient buffer or nullptr.
    const double* find_grad(const Tensor& t) const;

    std::size_t num_recorded() const { return steps_.size(); }

    /// Drop all recorded steps and gradient buffers.
    void reset();

  private:
    std::vector<std::function<void(Tape&)>> steps_;
    std::unordered_map<const void*, std::vector<double>> grads_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

}  // namespace wsol
