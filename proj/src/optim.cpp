#include "evolm/optim.hpp"

#include <cmath>

#include "evolm/error.hpp"
#include "evolm/kernels.hpp"

namespace evolm {

AdamW::AdamW(std::vector<Tensor> params, Hyper hyper)
    : params_(std::move(params)), hyper_(hyper) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    }
}

void AdamW::step(double lr_override) {
    const double lr = lr_override >= 0.0 ? lr_override : hyper_.lr;
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) {
            throw ContractError("AdamW::step: parameter " + std::to_string(i) +
                                " has no gradient");
        }
        kernels::active().adamw_update(p.data(), p.grad().data(), m_[i].data(), v_[i].data(),
                                       static_cast<std::size_t>(p.size()), lr, hyper_.beta1,
                                       hyper_.beta2, hyper_.eps, hyper_.weight_decay, bc1, bc2);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

double global_grad_norm(const std::vector<Tensor>& params) {
    double total = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) {
            continue;
        }
        for (const double gv : p.grad()) {
            total += gv * gv;
        }
    }
    return std::sqrt(total);
}

void clip_gradients(const std::vector<Tensor>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) {
        return;
    }
    const double factor = max_norm / norm;
    for (const auto& p : params) {
        if (!p.has_grad()) {
            continue;
        }
        Tensor t = p;
        kernels::active().scale(factor, t.grad().data(), t.grad().size());
    }
}

double lr_at_step(double base_lr, std::int64_t step, std::int64_t total_steps,
                  double warmup_frac) {
    const std::int64_t warmup = static_cast<std::int64_t>(
        std::ceil(warmup_frac * static_cast<double>(total_steps)));
    if (warmup > 0 && step <= warmup) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return base_lr;
}

}  // namespace evolm
