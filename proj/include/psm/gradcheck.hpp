#pragma once

#include <functional>
#include <string>

#include "psm/param_store.hpp"
#include "psm/tensor.hpp"

namespace psm {

// |a - n| / max(|a|, |n|, 1e-6)
double rel_err(double analytic, double numeric);

struct GradReport {
    double max_rel = 0.0;
    std::string worst;    // "name[i]" of the worst coordinate
    long checked = 0;
    bool pass(double tol) const { return max_rel < tol; }
};

// Central finite differences against already-populated analytic gradients.
// objective() must rerun the forward pass on the current parameter values.
// max_coords == 0 checks every element, otherwise a deterministic sample.
// Run in f64 mode; step 1e-5 and tol 1e-4 are the intended operating point.
GradReport check_param_grads(ParamStore& ps, const std::function<double()>& objective,
                             double step, int max_coords, uint64_t seed);

// Multi-step variant: each coordinate keeps its best step. A wrong gradient
// disagrees at every scale, whereas the two finite-difference artifacts are
// scale-local (cancellation noise at small steps, ReLU-kink straddles at
// large ones). Use for deep compositions; pass e.g. {1e-3, 1e-4, 1e-5}.
GradReport check_param_grads(ParamStore& ps, const std::function<double()>& objective,
                             const std::vector<double>& steps, int max_coords, uint64_t seed);

// Same idea for an input tensor whose analytic gradient gx is in hand.
GradReport check_tensor_grad(Tensor& x, const Tensor& gx,
                             const std::function<double()>& objective, double step,
                             int max_coords, uint64_t seed, const std::string& name = "input");
GradReport check_tensor_grad(Tensor& x, const Tensor& gx,
                             const std::function<double()>& objective,
                             const std::vector<double>& steps, int max_coords, uint64_t seed,
                             const std::string& name = "input");

}  // namespace psm
