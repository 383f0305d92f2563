#include "wsol/tensor.hpp"

#include <numeric>
#include <string>

namespace wsol {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(checked_size(shape_), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (checked_size(shape_) != values.size()) {
        throw DimensionError("tensor value count does not match shape");
    }
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : *t.data_) v = value;
    return t;
}

double Tensor::value() const {
    if (size() != 1) throw ContractError("value() requires a scalar tensor");
    return (*data_)[0];
}

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void(Tape&)> step) {
    steps_.push_back(std::move(step));
    consumed_ = false;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward requires a scalar loss");
    if (consumed_) throw StateError("backward already ran on this tape; record new operations first");
    grads_[loss.id()] = {1.0};
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        (*it)(*this);
    }
    consumed_ = true;
}

Tensor Tape::grad(const Tensor& t) const {
    Tensor g(t.shape());
    if (const double* buf = find_grad(t)) {
        std::copy(buf, buf + t.size(), g.data());
    }
    return g;
}

double* Tape::grad_acc(const Tensor& t) {
    auto [it, inserted] = grads_.try_emplace(t.id());
    if (inserted) it->second.assign(t.size(), 0.0);
    return it->second.data();
}

const double* Tape::find_grad(const Tensor& t) const {
    auto it = grads_.find(t.id());
    return it == grads_.end() ? nullptr : it->second.data();
}

void Tape::reset() {
    steps_.clear();
    grads_.clear();
    consumed_ = false;
}

}  // namespace wsol
