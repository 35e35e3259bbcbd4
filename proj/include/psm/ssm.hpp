#pragma once

#include "psm/rng.hpp"
#include "psm/tensor.hpp"

namespace psm {

// Diagonal state-space recurrence, applied independently per channel:
//   h_i = a (.) h_{i-1} + b * x_i,   h_0 = 0
//   y_i = sum_n cw_n * h_{i,n} + d * x_i
// a is stored through a sigmoid so the recurrence stays contractive.
struct SsmParams {
    int channels = 0;
    int state = 0;       // N
    Tensor a_raw;        // (C, N), a = sigmoid(a_raw) in (0, 1)
    Tensor b;            // (C, N)
    Tensor cw;           // (C, N)
    Tensor d;            // (C)

    static SsmParams init(int channels, int state, Rng& rng);
    Tensor a() const;    // materialized sigmoid(a_raw)
};

struct SsmGrads {
    Tensor a_raw;
    Tensor b;
    Tensor cw;
    Tensor d;

    static SsmGrads zeros_like(const SsmParams& p);
};

// Saved forward state for the backward pass.
struct SsmCtx {
    Tensor x;    // (B, C, L)
    Tensor h;    // (B, C, L, N) post-update states
};

// x: (B, C, L) -> y: (B, C, L). ctx may be null for inference.
Tensor ssm_scan(const Tensor& x, const SsmParams& p, SsmCtx* ctx);
// gx is returned; parameter grads accumulate into g.
Tensor ssm_scan_backward(const SsmCtx& ctx, const SsmParams& p, const Tensor& gy, SsmGrads& g);

// Impulse response at lag t >= 1 for one channel: sum_n cw_n a_n^(t-1) b_n,
// excluding the d skip term. Evaluated in log space so lags up to ~1e5 do
// not underflow term-by-term.
double impulse_response(const SsmParams& p, int channel, long t);
// Geometric envelope sum_n |cw_n b_n| * (max_n a_n)^(t-1).
double impulse_envelope(const SsmParams& p, int channel, long t);

}  // namespace psm
