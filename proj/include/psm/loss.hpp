#pragma once

#include "psm/tensor.hpp"

namespace psm {

struct LossResult {
    double value = 0.0;
    Tensor grad;    // d(value)/d(pred)
};

// mean |pred - target|; subgradient sign(r)/count with sign(0) = 0
LossResult l1_loss(const Tensor& pred, const Tensor& target);

// mean sqrt(r^2 + eps^2) per element; exactly eps at zero residual
LossResult charbonnier_loss(const Tensor& pred, const Tensor& target, double eps);

}  // namespace psm
