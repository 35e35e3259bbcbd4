#pragma once

#include <utility>
#include <vector>

#include "psm/tensor.hpp"

namespace psm {

// Tensor-core operations. Every forward op has a backward counterpart that
// consumes the saved forward inputs (or output where noted) and the incoming
// gradient. Parameter-gradient outputs accumulate (+=) so shared parameters
// can be driven from several call sites.

// --- convolution ---------------------------------------------------------
// x: (B, Cin, H, W), w: (Cout, Cin, kh, kw) with kh, kw odd, b: (Cout).
// Stride 1, zero padding (k-1)/2, cross-correlation semantics.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);

// --- pointwise ------------------------------------------------------------
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gy);
Tensor sigmoid(const Tensor& x);
// backward takes the saved *output* y
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// y = x + alpha * t   (residual with learnable scalar alpha)
Tensor add_scaled(const Tensor& x, const Tensor& t, double alpha);
// returns gt; gx is gy itself; galpha accumulates sum(gy*t)
Tensor add_scaled_backward(const Tensor& t, const Tensor& gy, double alpha, double* galpha);

// --- layer norm over the channel axis ------------------------------------
// x: (B, C, ...spatial); normalization per (batch, spatial position) token.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps,
                           const Tensor& gy, Tensor* ggamma, Tensor* gbeta);

// --- pooling / gating helpers ---------------------------------------------
// (B, C, H, W) -> (B, C) spatial mean
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& gy, int h, int w);

// y(b,c,hw) = x(b,c,hw) * s(b,c)
Tensor mul_channels(const Tensor& x, const Tensor& s);
void mul_channels_backward(const Tensor& x, const Tensor& s, const Tensor& gy,
                           Tensor* gx, Tensor* gs);

// y(b,c,hw) = x(b,c,hw) * s(b,0,hw)
Tensor mul_spatial(const Tensor& x, const Tensor& s);
void mul_spatial_backward(const Tensor& x, const Tensor& s, const Tensor& gy,
                          Tensor* gx, Tensor* gs);

// y = g (.) fc + (1-g) (.) fm  with g: (B, C) broadcast over space
Tensor gated_mix(const Tensor& fc, const Tensor& fm, const Tensor& g);
void gated_mix_backward(const Tensor& fc, const Tensor& fm, const Tensor& g, const Tensor& gy,
                        Tensor* gfc, Tensor* gfm, Tensor* gg);

// channel statistics maps (B, C, H, W) -> (B, 1, H, W)
Tensor channel_mean(const Tensor& x);
Tensor channel_mean_backward(const Tensor& gy, int c);
// returns argmax channel per pixel alongside values (first max wins)
std::pair<Tensor, std::vector<int>> channel_max(const Tensor& x);
Tensor channel_max_backward(const Tensor& gy, const std::vector<int>& argmax, int c);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void concat_channels_backward(const Tensor& gy, int ca, Tensor* ga, Tensor* gb);

// --- fully connected -------------------------------------------------------
// x: (B, in), w: (out, in), b: (out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor* gx, Tensor* gw, Tensor* gb);

// --- padding ---------------------------------------------------------------
struct PadRecord {
    int orig_h = 0;
    int orig_w = 0;
    bool padded() const { return orig_h > 0; }
};

// pads H, W up to the next multiples of mh, mw by edge replication
std::pair<Tensor, PadRecord> pad_to_multiple(const Tensor& x, int mh, int mw);
Tensor crop(const Tensor& x, const PadRecord& rec);
// gradient of pad: replicated border cells fold back onto their source cell
Tensor pad_to_multiple_backward(const Tensor& gy, const PadRecord& rec);
// gradient of crop: zero-extend back to the padded extent
Tensor crop_backward(const Tensor& gy, int padded_h, int padded_w);

// --- resampling -------------------------------------------------------------
// (B, C*s*s, H, W) -> (B, C, s*H, s*W), channel (c*s*s + dy*s + dx) -> pixel offset (dy, dx)
Tensor depth_to_space(const Tensor& x, int s);
Tensor depth_to_space_backward(const Tensor& gy, int s);

Tensor bilinear_upsample(const Tensor& x, int s);
Tensor bilinear_upsample_backward(const Tensor& gy, int s, int h, int w);

// s x s box average; H, W must be divisible by s (data-synthesis path, no backward)
Tensor area_downsample(const Tensor& x, int s);

}  // namespace psm
