#include "evolm/tensor.hpp"

#include <numeric>
#include <sstream>

#include "evolm/error.hpp"
#include "evolm/kernels.hpp"
#include "evolm/rng.hpp"

namespace evolm {

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (const auto d : shape) {
        if (d < 0) {
            throw DimensionError("negative extent in shape " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

}  // namespace

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << 'x';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    const std::int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<std::size_t>(n), 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.values()) {
        x = value;
    }
    return t;
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
    const std::int64_t n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::randn(std::vector<std::int64_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.values()) {
        x = rng.normal() * stddev;
    }
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) {
        impl_->grad.assign(impl_->data.size(), 0.0);
    }
    return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) {
        throw ContractError("gradient not populated");
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
}

std::vector<double>& Adjoints::of(const Tensor& t) {
    auto [it, inserted] = slots_.try_emplace(t.impl());
    if (inserted) {
        it->second.impl = t.ptr();
        it->second.adj.assign(static_cast<std::size_t>(t.size()), 0.0);
    }
    return it->second.adj;
}

const std::vector<double>* Adjoints::find(const Tensor& t) const {
    const auto it = slots_.find(t.impl());
    return it == slots_.end() ? nullptr : &it->second.adj;
}

void Adjoints::apply() const {
    for (const auto& [key, slot] : slots_) {
        (void)key;
        detail::TensorImpl* impl = slot.impl.get();
        if (!impl->requires_grad) {
            continue;
        }
        if (impl->grad.empty()) {
            impl->grad.assign(impl->data.size(), 0.0);
        }
        kernels::active().add(impl->grad.data(), slot.adj.data(), impl->grad.data(),
                              impl->grad.size());
    }
}

void Graph::record(const char* op, std::function<void(Adjoints&)> backward) {
    if (!recording_) {
        return;
    }
    nodes_.push_back(Node{op, std::move(backward)});
}

Adjoints Graph::backward_adjoints(const Tensor& loss, double seed) {
    if (loss.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            shape_str(loss.shape()));
    }
    Adjoints adj;
    adj.of(loss)[0] = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward(adj);
    }
    return adj;
}

void Graph::backward(const Tensor& loss, double seed) {
    backward_adjoints(loss, seed).apply();
}

}  // namespace evolm
