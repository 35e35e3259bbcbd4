#include "psm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "psm/macs.hpp"

namespace psm {

namespace {

template <class T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, int B, int Cin, int H, int W,
                int Cout, int kh, int kw) {
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Cout; ++co) {
            T* yp = y + (static_cast<std::size_t>(b) * Cout + co) * plane;
            std::fill(yp, yp + plane, bias[co]);
            for (int ci = 0; ci < Cin; ++ci) {
                const T* xp = x + (static_cast<std::size_t>(b) * Cin + ci) * plane;
                const T* wp = w + ((static_cast<std::size_t>(co) * Cin + ci) * kh) * kw;
                for (int dh = 0; dh < kh; ++dh) {
                    for (int dw = 0; dw < kw; ++dw) {
                        const T wv = wp[dh * kw + dw];
                        if (wv == T(0)) continue;
                        const int w0 = std::max(0, pw - dw);
                        const int w1 = std::min(W, W + pw - dw);
                        for (int h = 0; h < H; ++h) {
                            const int ih = h + dh - ph;
                            if (ih < 0 || ih >= H) continue;
                            T* yr = yp + static_cast<std::size_t>(h) * W;
                            const T* xr = xp + static_cast<std::size_t>(ih) * W + (dw - pw);
                            for (int ww = w0; ww < w1; ++ww) yr[ww] += wv * xr[ww];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv2d_bwd(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb, int B, int Cin, int H,
                int W, int Cout, int kh, int kw) {
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Cout; ++co) {
            const T* gyp = gy + (static_cast<std::size_t>(b) * Cout + co) * plane;
            if (gb) {
                T acc = T(0);
                for (std::size_t i = 0; i < plane; ++i) acc += gyp[i];
                gb[co] += acc;
            }
            for (int ci = 0; ci < Cin; ++ci) {
                const T* xp = x + (static_cast<std::size_t>(b) * Cin + ci) * plane;
                T* gxp = gx ? gx + (static_cast<std::size_t>(b) * Cin + ci) * plane : nullptr;
                const std::size_t wbase = (static_cast<std::size_t>(co) * Cin + ci) * kh * kw;
                for (int dh = 0; dh < kh; ++dh) {
                    for (int dw = 0; dw < kw; ++dw) {
                        const int w0 = std::max(0, pw - dw);
                        const int w1 = std::min(W, W + pw - dw);
                        const T wv = w[wbase + dh * kw + dw];
                        T wacc = T(0);
                        for (int h = 0; h < H; ++h) {
                            const int ih = h + dh - ph;
                            if (ih < 0 || ih >= H) continue;
                            const T* gyr = gyp + static_cast<std::size_t>(h) * W;
                            const T* xr = xp + static_cast<std::size_t>(ih) * W + (dw - pw);
                            if (gw)
                                for (int ww = w0; ww < w1; ++ww) wacc += gyr[ww] * xr[ww];
                            if (gxp) {
                                T* gxr = gxp + static_cast<std::size_t>(ih) * W + (dw - pw);
                                for (int ww = w0; ww < w1; ++ww) gxr[ww] += wv * gyr[ww];
                            }
                        }
                        if (gw) gw[wbase + dh * kw + dw] += wacc;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 4, "conv2d");
    require_rank(w, 4, "conv2d weights");
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Cin)
        fail_shape("conv2d: input channels " + shape_str(x.shape()) + " vs kernel " + shape_str(w.shape()));
    if (kh % 2 == 0 || kw % 2 == 0) fail_shape("conv2d: kernel sides must be odd");
    if (b.rank() != 1 || b.dim(0) != Cout) fail_shape("conv2d: bias shape " + shape_str(b.shape()));
    if (x.prec() != w.prec() || x.prec() != b.prec())
        fail_shape("conv2d: mixed storage precision between input and weights");
    Tensor y(Shape{B, Cout, H, W}, x.prec());
    if (x.is_f64())
        conv2d_fwd<double>(x.f64(), w.f64(), b.f64(), y.f64(), B, Cin, H, W, Cout, kh, kw);
    else
        conv2d_fwd<float>(x.f32(), w.f32(), b.f32(), y.f32(), B, Cin, H, W, Cout, kh, kw);
    macs::add(static_cast<std::uint64_t>(B) * Cout * Cin * kh * kw * H * W);
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (x.is_f64())
        conv2d_bwd<double>(x.f64(), w.f64(), gy.f64(), gx ? gx->f64() : nullptr,
                           gw ? gw->f64() : nullptr, gb ? gb->f64() : nullptr, B, Cin, H, W, Cout,
                           kh, kw);
    else
        conv2d_bwd<float>(x.f32(), w.f32(), gy.f32(), gx ? gx->f32() : nullptr,
                          gw ? gw->f32() : nullptr, gb ? gb->f32() : nullptr, B, Cin, H, W, Cout,
                          kh, kw);
    macs::add(2ULL * B * Cout * Cin * kh * kw * H * W);
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape(), x.prec());
    for (std::size_t i = 0; i < x.numel(); ++i) y.set(i, std::max(0.0, x.at(i)));
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    require_same_shape(x, gy, "relu_backward");
    Tensor gx(x.shape(), x.prec());
    for (std::size_t i = 0; i < x.numel(); ++i) gx.set(i, x.at(i) > 0.0 ? gy.at(i) : 0.0);
    return gx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape(), x.prec());
    for (std::size_t i = 0; i < x.numel(); ++i) y.set(i, 1.0 / (1.0 + std::exp(-x.at(i))));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
    require_same_shape(y, gy, "sigmoid_backward");
    Tensor gx(y.shape(), y.prec());
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double s = y.at(i);
        gx.set(i, gy.at(i) * s * (1.0 - s));
    }
    return gx;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor y(a.shape(), a.prec());
    for (std::size_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) + b.at(i));
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor y(a.shape(), a.prec());
    for (std::size_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) - b.at(i));
    return y;
}

Tensor scale(const Tensor& a, double s) {
    Tensor y(a.shape(), a.prec());
    for (std::size_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) * s);
    macs::add(a.numel());
    return y;
}

Tensor add_scaled(const Tensor& x, const Tensor& t, double alpha) {
    require_same_shape(x, t, "add_scaled");
    Tensor y(x.shape(), x.prec());
    for (std::size_t i = 0; i < x.numel(); ++i) y.set(i, x.at(i) + alpha * t.at(i));
    macs::add(x.numel());
    return y;
}

Tensor add_scaled_backward(const Tensor& t, const Tensor& gy, double alpha, double* galpha) {
    Tensor gt(t.shape(), t.prec());
    double acc = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        gt.set(i, alpha * gy.at(i));
        acc += gy.at(i) * t.at(i);
    }
    if (galpha) *galpha += acc;
    macs::add(2 * t.numel());
    return gt;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int B = x.dim(0), C = x.dim(1);
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != gamma.numel())
        fail_shape("layer_norm: affine size vs channels " + std::to_string(C));
    const std::size_t L = x.numel() / (static_cast<std::size_t>(B) * C);
    Tensor y(x.shape(), x.prec());
    for (int b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t base = static_cast<std::size_t>(b) * C * L + l;
            double mean = 0.0;
            for (int c = 0; c < C; ++c) mean += x.at(base + c * L);
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d = x.at(base + c * L) - mean;
                var += d * d;
            }
            var /= C;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < C; ++c) {
                const double xhat = (x.at(base + c * L) - mean) * inv;
                y.set(base + c * L, gamma.at(c) * xhat + beta.at(c));
            }
        }
    }
    macs::add(3 * x.numel());
    return y;
}

Tensor layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& gy,
                           Tensor* ggamma, Tensor* gbeta) {
    const int B = x.dim(0), C = x.dim(1);
    const std::size_t L = x.numel() / (static_cast<std::size_t>(B) * C);
    Tensor gx(x.shape(), x.prec());
    for (int b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t base = static_cast<std::size_t>(b) * C * L + l;
            double mean = 0.0;
            for (int c = 0; c < C; ++c) mean += x.at(base + c * L);
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d = x.at(base + c * L) - mean;
                var += d * d;
            }
            var /= C;
            const double inv = 1.0 / std::sqrt(var + eps);
            double amean = 0.0, axmean = 0.0;
            for (int c = 0; c < C; ++c) {
                const double xhat = (x.at(base + c * L) - mean) * inv;
                const double a = gy.at(base + c * L) * gamma.at(c);
                amean += a;
                axmean += a * xhat;
                if (ggamma) ggamma->add_at(c, gy.at(base + c * L) * xhat);
                if (gbeta) gbeta->add_at(c, gy.at(base + c * L));
            }
            amean /= C;
            axmean /= C;
            for (int c = 0; c < C; ++c) {
                const double xhat = (x.at(base + c * L) - mean) * inv;
                const double a = gy.at(base + c * L) * gamma.at(c);
                gx.set(base + c * L, inv * (a - amean - xhat * axmean));
            }
        }
    }
    macs::add(6 * x.numel());
    return gx;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const int B = x.dim(0), C = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y(Shape{B, C}, x.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += x.at(base + i);
            y.set(static_cast<std::size_t>(b) * C + c, acc / static_cast<double>(plane));
        }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, int h, int w) {
    const int B = gy.dim(0), C = gy.dim(1);
    Tensor gx(Shape{B, C, h, w}, gy.prec());
    const double inv = 1.0 / (static_cast<double>(h) * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double g = gy.at(static_cast<std::size_t>(b) * C + c) * inv;
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) gx.set(base + i, g);
        }
    return gx;
}

Tensor mul_channels(const Tensor& x, const Tensor& s) {
    require_rank(x, 4, "mul_channels");
    const int B = x.dim(0), C = x.dim(1);
    if (s.rank() != 2 || s.dim(0) != B || s.dim(1) != C)
        fail_shape("mul_channels: scale shape " + shape_str(s.shape()));
    Tensor y(x.shape(), x.prec());
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double sv = s.at(static_cast<std::size_t>(b) * C + c);
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) y.set(base + i, x.at(base + i) * sv);
        }
    macs::add(x.numel());
    return y;
}

void mul_channels_backward(const Tensor& x, const Tensor& s, const Tensor& gy, Tensor* gx,
                           Tensor* gs) {
    const int B = x.dim(0), C = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t sc = static_cast<std::size_t>(b) * C + c;
            const double sv = s.at(sc);
            const std::size_t base = sc * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                if (gx) gx->set(base + i, gy.at(base + i) * sv);
                acc += gy.at(base + i) * x.at(base + i);
            }
            if (gs) gs->add_at(sc, acc);
        }
    macs::add(2 * x.numel());
}

Tensor mul_spatial(const Tensor& x, const Tensor& s) {
    require_rank(x, 4, "mul_spatial");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (s.rank() != 4 || s.dim(0) != B || s.dim(1) != 1 || s.dim(2) != H || s.dim(3) != W)
        fail_shape("mul_spatial: scale shape " + shape_str(s.shape()));
    Tensor y(x.shape(), x.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t xi = (static_cast<std::size_t>(b) * C + c) * plane + i;
                y.set(xi, x.at(xi) * s.at(static_cast<std::size_t>(b) * plane + i));
            }
    macs::add(x.numel());
    return y;
}

void mul_spatial_backward(const Tensor& x, const Tensor& s, const Tensor& gy, Tensor* gx,
                          Tensor* gs) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t xi = (static_cast<std::size_t>(b) * C + c) * plane + i;
                const std::size_t si = static_cast<std::size_t>(b) * plane + i;
                if (gx) gx->set(xi, gy.at(xi) * s.at(si));
                if (gs) gs->add_at(si, gy.at(xi) * x.at(xi));
            }
    macs::add(2 * x.numel());
}

Tensor gated_mix(const Tensor& fc, const Tensor& fm, const Tensor& g) {
    require_same_shape(fc, fm, "gated_mix");
    const int B = fc.dim(0), C = fc.dim(1);
    if (g.rank() != 2 || g.dim(0) != B || g.dim(1) != C)
        fail_shape("gated_mix: gate shape " + shape_str(g.shape()));
    Tensor y(fc.shape(), fc.prec());
    const std::size_t plane = fc.numel() / (static_cast<std::size_t>(B) * C);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double gv = g.at(static_cast<std::size_t>(b) * C + c);
            const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                y.set(base + i, gv * fc.at(base + i) + (1.0 - gv) * fm.at(base + i));
        }
    macs::add(2 * fc.numel());
    return y;
}

void gated_mix_backward(const Tensor& fc, const Tensor& fm, const Tensor& g, const Tensor& gy,
                        Tensor* gfc, Tensor* gfm, Tensor* gg) {
    const int B = fc.dim(0), C = fc.dim(1);
    const std::size_t plane = fc.numel() / (static_cast<std::size_t>(B) * C);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t gi = static_cast<std::size_t>(b) * C + c;
            const double gv = g.at(gi);
            const std::size_t base = gi * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double gyv = gy.at(base + i);
                if (gfc) gfc->set(base + i, gyv * gv);
                if (gfm) gfm->set(base + i, gyv * (1.0 - gv));
                acc += gyv * (fc.at(base + i) - fm.at(base + i));
            }
            if (gg) gg->add_at(gi, acc);
        }
    macs::add(3 * fc.numel());
}

Tensor channel_mean(const Tensor& x) {
    require_rank(x, 4, "channel_mean");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(Shape{B, 1, H, W}, x.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c) acc += x.at((static_cast<std::size_t>(b) * C + c) * plane + i);
            y.set(static_cast<std::size_t>(b) * plane + i, acc / C);
        }
    return y;
}

Tensor channel_mean_backward(const Tensor& gy, int c) {
    const int B = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
    Tensor gx(Shape{B, c, H, W}, gy.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (int ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < plane; ++i)
                gx.set((static_cast<std::size_t>(b) * c + ci) * plane + i,
                       gy.at(static_cast<std::size_t>(b) * plane + i) / c);
    return gx;
}

std::pair<Tensor, std::vector<int>> channel_max(const Tensor& x) {
    require_rank(x, 4, "channel_max");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(Shape{B, 1, H, W}, x.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<int> arg(static_cast<std::size_t>(B) * plane, 0);
    for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            double best = x.at(static_cast<std::size_t>(b) * C * plane + i);
            int bc = 0;
            for (int c = 1; c < C; ++c) {
                const double v = x.at((static_cast<std::size_t>(b) * C + c) * plane + i);
                if (v > best) {
                    best = v;
                    bc = c;
                }
            }
            y.set(static_cast<std::size_t>(b) * plane + i, best);
            arg[static_cast<std::size_t>(b) * plane + i] = bc;
        }
    return {std::move(y), std::move(arg)};
}

Tensor channel_max_backward(const Tensor& gy, const std::vector<int>& argmax, int c) {
    const int B = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
    Tensor gx(Shape{B, c, H, W}, gy.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t p = static_cast<std::size_t>(b) * plane + i;
            gx.set((static_cast<std::size_t>(b) * c + argmax[p]) * plane + i, gy.at(p));
        }
    return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 4, "concat_channels");
    require_rank(b, 4, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        fail_shape("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor y(Shape{B, Ca + Cb, H, W}, a.prec());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int bb = 0; bb < B; ++bb) {
        for (int c = 0; c < Ca; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                y.set((static_cast<std::size_t>(bb) * (Ca + Cb) + c) * plane + i,
                      a.at((static_cast<std::size_t>(bb) * Ca + c) * plane + i));
        for (int c = 0; c < Cb; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                y.set((static_cast<std::size_t>(bb) * (Ca + Cb) + Ca + c) * plane + i,
                      b.at((static_cast<std::size_t>(bb) * Cb + c) * plane + i));
    }
    return y;
}

void concat_channels_backward(const Tensor& gy, int ca, Tensor* ga, Tensor* gb) {
    const int B = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    const int cb = C - ca;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int bb = 0; bb < B; ++bb) {
        if (ga)
            for (int c = 0; c < ca; ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    ga->set((static_cast<std::size_t>(bb) * ca + c) * plane + i,
                            gy.at((static_cast<std::size_t>(bb) * C + c) * plane + i));
        if (gb)
            for (int c = 0; c < cb; ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gb->set((static_cast<std::size_t>(bb) * cb + c) * plane + i,
                            gy.at((static_cast<std::size_t>(bb) * C + ca + c) * plane + i));
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear weights");
    const int B = x.dim(0), In = x.dim(1), Out = w.dim(0);
    if (w.dim(1) != In)
        fail_shape("linear: input " + shape_str(x.shape()) + " vs weights " + shape_str(w.shape()));
    Tensor y(Shape{B, Out}, x.prec());
    for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < Out; ++o) {
            double acc = b.at(o);
            for (int i = 0; i < In; ++i)
                acc += w.at(static_cast<std::size_t>(o) * In + i) * x.at(static_cast<std::size_t>(bb) * In + i);
            y.set(static_cast<std::size_t>(bb) * Out + o, acc);
        }
    macs::add(static_cast<std::uint64_t>(B) * Out * In);
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
    const int B = x.dim(0), In = x.dim(1), Out = w.dim(0);
    if (gx) gx->fill(0.0);
    for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < Out; ++o) {
            const double g = gy.at(static_cast<std::size_t>(bb) * Out + o);
            if (gb) gb->add_at(o, g);
            for (int i = 0; i < In; ++i) {
                if (gw)
                    gw->add_at(static_cast<std::size_t>(o) * In + i,
                               g * x.at(static_cast<std::size_t>(bb) * In + i));
                if (gx)
                    gx->add_at(static_cast<std::size_t>(bb) * In + i,
                               g * w.at(static_cast<std::size_t>(o) * In + i));
            }
        }
    macs::add(2ULL * B * Out * In);
}

std::pair<Tensor, PadRecord> pad_to_multiple(const Tensor& x, int mh, int mw) {
    require_rank(x, 4, "pad_to_multiple");
    if (mh < 1 || mw < 1) fail_shape("pad_to_multiple: multiples must be >= 1");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Hp = ((H + mh - 1) / mh) * mh;
    const int Wp = ((W + mw - 1) / mw) * mw;
    PadRecord rec{H, W};
    if (Hp == H && Wp == W) return {x, rec};
    Tensor y(Shape{B, C, Hp, Wp}, x.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Hp; ++h) {
                const int sh = std::min(h, H - 1);
                for (int w = 0; w < Wp; ++w)
                    y.set(y.idx4(b, c, h, w), x.at4(b, c, sh, std::min(w, W - 1)));
            }
    return {std::move(y), rec};
}

Tensor crop(const Tensor& x, const PadRecord& rec) {
    require_rank(x, 4, "crop");
    const int B = x.dim(0), C = x.dim(1);
    if (rec.orig_h == x.dim(2) && rec.orig_w == x.dim(3)) return x;
    if (rec.orig_h > x.dim(2) || rec.orig_w > x.dim(3))
        fail_shape("crop: target larger than input " + shape_str(x.shape()));
    Tensor y(Shape{B, C, rec.orig_h, rec.orig_w}, x.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < rec.orig_h; ++h)
                for (int w = 0; w < rec.orig_w; ++w) y.set(y.idx4(b, c, h, w), x.at4(b, c, h, w));
    return y;
}

Tensor pad_to_multiple_backward(const Tensor& gy, const PadRecord& rec) {
    const int B = gy.dim(0), C = gy.dim(1), Hp = gy.dim(2), Wp = gy.dim(3);
    if (Hp == rec.orig_h && Wp == rec.orig_w) return gy;
    Tensor gx(Shape{B, C, rec.orig_h, rec.orig_w}, gy.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Hp; ++h) {
                const int sh = std::min(h, rec.orig_h - 1);
                for (int w = 0; w < Wp; ++w)
                    gx.add_at(gx.idx4(b, c, sh, std::min(w, rec.orig_w - 1)), gy.at4(b, c, h, w));
            }
    return gx;
}

Tensor crop_backward(const Tensor& gy, int padded_h, int padded_w) {
    const int B = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    if (padded_h == H && padded_w == W) return gy;
    Tensor gx(Shape{B, C, padded_h, padded_w}, gy.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) gx.set(gx.idx4(b, c, h, w), gy.at4(b, c, h, w));
    return gx;
}

Tensor depth_to_space(const Tensor& x, int s) {
    require_rank(x, 4, "depth_to_space");
    const int B = x.dim(0), Cs = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (Cs % (s * s) != 0) fail_shape("depth_to_space: channels not divisible by s^2");
    const int C = Cs / (s * s);
    Tensor y(Shape{B, C, H * s, W * s}, x.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) {
                    const int ci = c * s * s + dy * s + dx;
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                            y.set(y.idx4(b, c, h * s + dy, w * s + dx), x.at4(b, ci, h, w));
                }
    return y;
}

Tensor depth_to_space_backward(const Tensor& gy, int s) {
    const int B = gy.dim(0), C = gy.dim(1), Hs = gy.dim(2), Ws = gy.dim(3);
    const int H = Hs / s, W = Ws / s;
    Tensor gx(Shape{B, C * s * s, H, W}, gy.prec());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) {
                    const int ci = c * s * s + dy * s + dx;
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                            gx.set(gx.idx4(b, ci, h, w), gy.at4(b, c, h * s + dy, w * s + dx));
                }
    return gx;
}

namespace {
struct Lerp {
    int i0, i1;
    double w0, w1;
};

Lerp lerp_coord(int out, int s, int in_size) {
    const double src = (out + 0.5) / s - 0.5;
    double f = std::floor(src);
    int i0 = static_cast<int>(f);
    double t = src - f;
    int i1 = i0 + 1;
    if (i0 < 0) {
        i0 = 0;
        i1 = 0;
        t = 0.0;
    }
    if (i1 >= in_size) {
        i1 = in_size - 1;
        if (i0 > i1) i0 = i1;
        if (i0 == i1) t = 0.0;
    }
    return {i0, i1, 1.0 - t, t};
}
}  // namespace

Tensor bilinear_upsample(const Tensor& x, int s) {
    require_rank(x, 4, "bilinear_upsample");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(Shape{B, C, H * s, W * s}, x.prec());
    for (int oh = 0; oh < H * s; ++oh) {
        const Lerp lh = lerp_coord(oh, s, H);
        for (int ow = 0; ow < W * s; ++ow) {
            const Lerp lw = lerp_coord(ow, s, W);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const double v = lh.w0 * (lw.w0 * x.at4(b, c, lh.i0, lw.i0) + lw.w1 * x.at4(b, c, lh.i0, lw.i1)) +
                                     lh.w1 * (lw.w0 * x.at4(b, c, lh.i1, lw.i0) + lw.w1 * x.at4(b, c, lh.i1, lw.i1));
                    y.set(y.idx4(b, c, oh, ow), v);
                }
        }
    }
    macs::add(4 * y.numel());
    return y;
}

Tensor bilinear_upsample_backward(const Tensor& gy, int s, int h, int w) {
    const int B = gy.dim(0), C = gy.dim(1);
    Tensor gx(Shape{B, C, h, w}, gy.prec());
    for (int oh = 0; oh < gy.dim(2); ++oh) {
        const Lerp lh = lerp_coord(oh, s, h);
        for (int ow = 0; ow < gy.dim(3); ++ow) {
            const Lerp lw = lerp_coord(ow, s, w);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const double g = gy.at4(b, c, oh, ow);
                    gx.add_at(gx.idx4(b, c, lh.i0, lw.i0), g * lh.w0 * lw.w0);
                    gx.add_at(gx.idx4(b, c, lh.i0, lw.i1), g * lh.w0 * lw.w1);
                    gx.add_at(gx.idx4(b, c, lh.i1, lw.i0), g * lh.w1 * lw.w0);
                    gx.add_at(gx.idx4(b, c, lh.i1, lw.i1), g * lh.w1 * lw.w1);
                }
        }
    }
    macs::add(4 * gy.numel());
    return gx;
}

Tensor area_downsample(const Tensor& x, int s) {
    require_rank(x, 4, "area_downsample");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % s != 0 || W % s != 0) fail_shape("area_downsample: H, W must be divisible by s");
    Tensor y(Shape{B, C, H / s, W / s}, x.prec());
    const double inv = 1.0 / (static_cast<double>(s) * s);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H / s; ++h)
                for (int w = 0; w < W / s; ++w) {
                    double acc = 0.0;
                    for (int dy = 0; dy < s; ++dy)
                        for (int dx = 0; dx < s; ++dx) acc += x.at4(b, c, h * s + dy, w * s + dx);
                    y.set(y.idx4(b, c, h, w), acc * inv);
                }
    return y;
}

}  // namespace psm
