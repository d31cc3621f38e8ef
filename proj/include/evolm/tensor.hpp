#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace evolm {

class Rng;

namespace detail {

struct TensorImpl {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    // Persistent gradient, lazily allocated on first accumulation.
    std::vector<double> grad;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
};

}  // namespace detail

std::string shape_str(const std::vector<std::int64_t>& shape);

// Dense row-major fp64 tensor with shared-value semantics: copies alias the
// same storage. Values are immutable after creation by convention; only
// gradient accumulation and explicit parameter updates mutate storage.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::int64_t>& shape() const { return impl_->shape; }
    std::int64_t size() const { return impl_->size(); }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t dim(int axis) const { return impl_->shape[static_cast<std::size_t>(axis)]; }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    // Value of a scalar (size-1) tensor.
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool value) { impl_->requires_grad = value; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& ptr() const { return impl_; }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<detail::TensorImpl> impl_;
};

// Per-backward adjoint buffers. Keeping adjoints outside the tensors lets
// distinct graphs run backward concurrently over shared parameters, and makes
// repeated backward calls accumulate instead of clobbering.
class Adjoints {
  public:
    // Zero-initialised buffer for t, created on first access.
    std::vector<double>& of(const Tensor& t);

    // Null when the tensor never received an adjoint (dead branch).
    const std::vector<double>* find(const Tensor& t) const;

    void apply() const;  // grad += adjoint for every requires_grad tensor seen

  private:
    struct Slot {
        std::shared_ptr<detail::TensorImpl> impl;
        std::vector<double> adj;
    };
    std::unordered_map<const detail::TensorImpl*, Slot> slots_;
};

// Dynamic tape. Operations append nodes in execution order; backward replays
// them in strict reverse order. A graph and the tensors it created stay on
// one thread; separate graphs may run on separate threads.
class Graph {
  public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    static Graph inference() { return Graph(false); }

    bool recording() const { return recording_; }

    void record(const char* op, std::function<void(Adjoints&)> backward);

    // Computes adjoints seeded with `seed` at `loss` and folds them into the
    // persistent .grad of every requires_grad tensor.
    void backward(const Tensor& loss, double seed = 1.0);

    // Same replay but leaves the fold-in to the caller; used to merge
    // per-sample gradients in a deterministic order.
    Adjoints backward_adjoints(const Tensor& loss, double seed = 1.0);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        const char* op;
        std::function<void(Adjoints&)> backward;
    };
    std::vector<Node> nodes_;
    bool recording_;
};

}  // namespace evolm
