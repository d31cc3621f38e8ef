#pragma once

#include <cstdint>
#include <vector>

#include "evolm/tensor.hpp"

namespace evolm {

// AdamW with decoupled weight decay: p <- p*(1 - lr*wd) - lr*mhat/(sqrt(vhat)+eps).
class AdamW {
  public:
    struct Hyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(std::vector<Tensor> params, Hyper hyper);

    // Applies one update using lr_override when non-negative, otherwise the
    // configured lr. Every parameter must have a populated gradient.
    void step(double lr_override = -1.0);

    void zero_grad();

    std::int64_t step_count() const { return t_; }
    const Hyper& hyper() const { return hyper_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    Hyper hyper_;
    std::int64_t t_ = 0;
};

// sqrt of the summed squared gradients, in parameter order.
double global_grad_norm(const std::vector<Tensor>& params);

// Scales all gradients by max_norm/norm when norm exceeds max_norm.
void clip_gradients(const std::vector<Tensor>& params, double max_norm);

// Linear warmup over the first ceil(warmup_frac*total) steps, then constant.
double lr_at_step(double base_lr, std::int64_t step, std::int64_t total_steps,
                  double warmup_frac);

}  // namespace evolm
