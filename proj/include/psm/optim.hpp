#pragma once

#include <vector>

#include "psm/param_store.hpp"
#include "psm/tensor.hpp"

namespace psm {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers, one pair per parameter, in store order.
struct AdamState {
    long step = 0;
    std::vector<Tensor> m, v;

    void init(const ParamStore& ps);
    bool initialized() const { return !m.empty(); }
};

// Bias-corrected Adam update; zeroes the gradients afterwards.
void adam_step(ParamStore& ps, AdamState& st, const AdamConfig& cfg);

}  // namespace psm
