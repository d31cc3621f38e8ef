#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "doctest.h"
#include "evolm/ops.hpp"
#include "evolm/rng.hpp"
#include "evolm/tensor.hpp"

namespace testutil {

inline evolm::Tensor random_tensor(std::vector<std::int64_t> shape, evolm::Rng& rng,
                                   double scale = 1.0, bool requires_grad = true) {
    return evolm::Tensor::randn(std::move(shape), rng, scale, requires_grad);
}

// Central finite-difference gradient check. `fn` maps the inputs to an output
// tensor; the harness contracts it to a scalar with fixed random weights so a
// single backward covers every output element.
inline void check_gradients(
    const std::function<evolm::Tensor(evolm::Graph&, const std::vector<evolm::Tensor>&)>& fn,
    std::vector<evolm::Tensor> inputs, std::uint64_t seed, double tol = 1e-5,
    double step = 1e-5) {
    evolm::Rng wrng(evolm::Rng::mix(seed, 0x77));
    std::vector<double> weights;

    const auto loss_value = [&](evolm::Graph& g) {
        evolm::Tensor out = fn(g, inputs);
        if (weights.empty()) {
            weights.reserve(static_cast<std::size_t>(out.size()));
            for (std::int64_t i = 0; i < out.size(); ++i) {
                weights.push_back(wrng.uniform() * 2.0 - 1.0);
            }
        }
        evolm::Tensor w = evolm::Tensor::from(out.shape(), weights);
        return evolm::ops::sum_all(g, evolm::ops::mul(g, out, w));
    };

    evolm::Graph g;
    evolm::Tensor loss = loss_value(g);
    for (auto& t : inputs) {
        t.zero_grad();
    }
    g.backward(loss);

    for (auto& t : inputs) {
        if (!t.requires_grad()) {
            continue;
        }
        const std::vector<double> analytic = t.grad();
        for (std::int64_t j = 0; j < t.size(); ++j) {
            const double saved = t.data()[j];
            t.data()[j] = saved + step;
            evolm::Graph gp(false);
            const double lp = loss_value(gp).item();
            t.data()[j] = saved - step;
            evolm::Graph gm(false);
            const double lm = loss_value(gm).item();
            t.data()[j] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[static_cast<std::size_t>(j)];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            INFO("element ", j, " analytic ", a, " numeric ", numeric);
            CHECK(rel < tol);
        }
    }
}

}  // namespace testutil
