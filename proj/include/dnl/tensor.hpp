#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dnl/common.hpp"

namespace dnl {

template <typename T>
class Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

/// Dense N-dimensional array (row-major) with optional reverse-mode gradient
/// tracking. Images are NCHW. Nodes created by tracked ops hold their parents
/// and a closure that scatters the node's gradient back to them; values are
/// never mutated once a node is part of a graph.
///
/// The scalar type is `float` for the production pipeline; tests instantiate
/// `double` to verify gradients against finite differences without fp32
/// rounding in the way.
template <typename T>
class Tensor : public std::enable_shared_from_this<Tensor<T>> {
public:
    using Scalar = T;

    Tensor(std::vector<int> shape, bool requires_grad)
        : shape_(std::move(shape)), data_(check_shape_(shape_), T(0)), requires_grad_(requires_grad) {}

    Tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad)
        : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
        if (data_.size() != check_shape_(shape_))
            throw ContractViolation("tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }

    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    // -- factories ---------------------------------------------------------

    static TensorPtr<T> zeros(std::vector<int> shape, bool requires_grad = false) {
        return std::make_shared<Tensor<T>>(std::move(shape), requires_grad);
    }

    static TensorPtr<T> full(std::vector<int> shape, T value, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        std::fill(t->data_.begin(), t->data_.end(), value);
        return t;
    }

    static TensorPtr<T> from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
    }

    static TensorPtr<T> scalar(T value) { return full({1}, value); }

    /// Normally distributed entries, mean 0.
    static TensorPtr<T> randn(std::vector<int> shape, std::mt19937_64& eng, double stddev = 1.0,
                              bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        if (stddev > 0.0) {
            std::normal_distribution<double> dist(0.0, stddev);
            for (auto& v : t->data_) v = static_cast<T>(dist(eng));
        }
        return t;
    }

    // -- shape/data access ---------------------------------------------------

    const std::vector<int>& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    int dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }
    T value() const {
        if (numel() != 1) throw ContractViolation("value(): tensor is not scalar, shape " + shape_str(shape_));
        return data_[0];
    }

    bool requires_grad() const { return requires_grad_; }

    /// Gradient buffer, allocated (zeroed) on first access.
    std::vector<T>& grad() {
        if (!requires_grad_) throw ContractViolation("grad(): tensor does not track gradients");
        if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
        return grad_;
    }

    bool has_grad() const { return grad_.size() == data_.size(); }

    void zero_grad() {
        if (grad_.size() == data_.size())
            std::fill(grad_.begin(), grad_.end(), T(0));
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void check_finite(const std::string& what) const {
        if (!all_finite()) throw NumericError(what + ": non-finite value");
    }

    /// Copy of the values with gradient tracking and graph history dropped.
    TensorPtr<T> detach() const { return from_data(shape_, data_, false); }

    TensorPtr<T> clone_leaf() const { return from_data(shape_, data_, requires_grad_); }

    // -- graph ---------------------------------------------------------------

    /// Wire a freshly built op result into the graph. `backprop` reads this
    /// node's grad and accumulates into the parents' grads.
    void set_history(std::vector<TensorPtr<T>> parents, std::function<void()> backprop) {
        parents_ = std::move(parents);
        backprop_ = std::move(backprop);
    }

    const std::vector<TensorPtr<T>>& parents() const { return parents_; }

    /// Reverse-mode sweep from a scalar loss. Every tracked tensor reachable
    /// from the loss receives (accumulates) its gradient; leaves not on the
    /// graph are untouched.
    void backward() {
        if (numel() != 1) throw ContractViolation("backward(): loss must be scalar, shape " + shape_str(shape_));
        if (!requires_grad_) throw ContractViolation("backward(): loss does not track gradients");

        std::vector<Tensor<T>*> order;
        std::unordered_set<Tensor<T>*> seen;
        std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
        stack.emplace_back(this, 0);
        seen.insert(this);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents_.size()) {
                Tensor<T>* p = node->parents_[next++].get();
                if (p->requires_grad_ && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        // order is a postorder: parents precede consumers; walk it backwards.
        grad().assign(1, T(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop_) (*it)->backprop_();
        }
    }

private:
    static std::size_t check_shape_(const std::vector<int>& shape) {
        for (int e : shape)
            if (e <= 0) throw ContractViolation("tensor: non-positive extent in shape " + shape_str(shape));
        return shape_numel(shape);
    }

    std::vector<int> shape_;
    std::vector<T> data_;
    std::vector<T> grad_;
    bool requires_grad_ = false;
    std::vector<TensorPtr<T>> parents_;
    std::function<void()> backprop_;
};

template <typename T>
void backward(const TensorPtr<T>& loss) {
    loss->backward();
}

template <typename T>
TensorPtr<T> detach(const TensorPtr<T>& t) {
    return t->detach();
}

}  // namespace dnl
