#pragma once

#include "psm/tensor.hpp"

namespace psm {

// 10*log10(peak^2 / MSE), capped at 99 dB when MSE < 1e-12
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// peak 1, valid-window sweep, computed per channel then averaged. Maps
// smaller than the window fall back to the largest odd window that fits.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace psm
