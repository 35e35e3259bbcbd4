#include "psm/ssm.hpp"

#include <cmath>
#include <vector>

#include "psm/macs.hpp"

namespace psm {

namespace {
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

SsmParams SsmParams::init(int channels, int state, Rng& rng) {
    SsmParams p;
    p.channels = channels;
    p.state = state;
    // transition magnitudes spread from short to long memory
    p.a_raw = Tensor::rand_uniform(Shape{channels, state}, rng, logit(0.5), logit(0.99));
    p.b = Tensor::rand_normal(Shape{channels, state}, rng, 0.0, 0.1);
    p.cw = Tensor::rand_normal(Shape{channels, state}, rng, 0.0, 0.1);
    p.d = Tensor::full(Shape{channels}, 1.0);
    return p;
}

Tensor SsmParams::a() const {
    Tensor out(a_raw.shape(), a_raw.prec());
    for (std::size_t i = 0; i < a_raw.numel(); ++i) out.set(i, 1.0 / (1.0 + std::exp(-a_raw.at(i))));
    return out;
}

SsmGrads SsmGrads::zeros_like(const SsmParams& p) {
    SsmGrads g;
    g.a_raw = Tensor(p.a_raw.shape(), p.a_raw.prec());
    g.b = Tensor(p.b.shape(), p.b.prec());
    g.cw = Tensor(p.cw.shape(), p.cw.prec());
    g.d = Tensor(p.d.shape(), p.d.prec());
    return g;
}

namespace {

template <class T>
void scan_fwd(const T* x, const T* a, const T* b, const T* cw, const T* d, T* y, T* hout, int B,
              int C, int L, int N) {
    std::vector<T> h(static_cast<std::size_t>(N));
    for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c) {
            const T* ac = a + static_cast<std::size_t>(c) * N;
            const T* bc = b + static_cast<std::size_t>(c) * N;
            const T* cc = cw + static_cast<std::size_t>(c) * N;
            const T dc = d[c];
            const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * L;
            std::fill(h.begin(), h.end(), T(0));
            for (int i = 0; i < L; ++i) {
                const T xi = x[base + i];
                T acc = dc * xi;
                if (hout) {
                    T* hrow = hout + (base + i) * N;
                    const T* hprev = i ? hout + (base + i - 1) * N : nullptr;
                    for (int n = 0; n < N; ++n) {
                        const T hv = (i ? hprev[n] : T(0)) * ac[n] + bc[n] * xi;
                        hrow[n] = hv;
                        acc += cc[n] * hv;
                    }
                } else {
                    for (int n = 0; n < N; ++n) {
                        h[n] = ac[n] * h[n] + bc[n] * xi;
                        acc += cc[n] * h[n];
                    }
                }
                y[base + i] = acc;
            }
        }
}

// lambda_i = cw * gy_i + a (.) lambda_{i+1}; walks time backwards
template <class T>
void scan_bwd(const T* x, const T* h, const T* a, const T* b, const T* cw, const T* d,
              const T* gy, T* gx, T* ga, T* gb, T* gcw, T* gd, int B, int C, int L, int N) {
    std::vector<T> lam(static_cast<std::size_t>(N));
    for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c) {
            const T* ac = a + static_cast<std::size_t>(c) * N;
            const T* bc = b + static_cast<std::size_t>(c) * N;
            const T* cc = cw + static_cast<std::size_t>(c) * N;
            T* gac = ga + static_cast<std::size_t>(c) * N;
            T* gbc = gb + static_cast<std::size_t>(c) * N;
            T* gcc = gcw + static_cast<std::size_t>(c) * N;
            const std::size_t base = (static_cast<std::size_t>(bb) * C + c) * L;
            std::fill(lam.begin(), lam.end(), T(0));
            T gdc = T(0);
            for (int i = L - 1; i >= 0; --i) {
                const T g = gy[base + i];
                const T xi = x[base + i];
                const T* hrow = h + (base + i) * N;
                const T* hprev = i ? h + (base + i - 1) * N : nullptr;
                gdc += g * xi;
                T gxi = d[c] * g;
                for (int n = 0; n < N; ++n) {
                    gcc[n] += g * hrow[n];
                    const T l = cc[n] * g + ac[n] * lam[n];
                    lam[n] = l;
                    gac[n] += l * (i ? hprev[n] : T(0));
                    gbc[n] += l * xi;
                    gxi += l * bc[n];
                }
                gx[base + i] = gxi;
            }
            gd[c] += gdc;
        }
}

}  // namespace

Tensor ssm_scan(const Tensor& x, const SsmParams& p, SsmCtx* ctx) {
    require_rank(x, 3, "ssm_scan");
    const int B = x.dim(0), C = x.dim(1), L = x.dim(2), N = p.state;
    if (C != p.channels)
        fail_shape("ssm_scan: input channels " + shape_str(x.shape()) + " vs params with " +
                   std::to_string(p.channels));
    const Tensor a = p.a();
    Tensor y(x.shape(), x.prec());
    Tensor h;
    if (ctx) h = Tensor(Shape{B, C, L, N}, x.prec());
    if (x.is_f64())
        scan_fwd<double>(x.f64(), a.f64(), p.b.f64(), p.cw.f64(), p.d.f64(), y.f64(),
                         ctx ? h.f64() : nullptr, B, C, L, N);
    else
        scan_fwd<float>(x.f32(), a.f32(), p.b.f32(), p.cw.f32(), p.d.f32(), y.f32(),
                        ctx ? h.f32() : nullptr, B, C, L, N);
    macs::add(static_cast<std::uint64_t>(B) * C * L * (3ULL * N + 1));
    if (ctx) {
        ctx->x = x;
        ctx->h = std::move(h);
    }
    return y;
}

Tensor ssm_scan_backward(const SsmCtx& ctx, const SsmParams& p, const Tensor& gy, SsmGrads& g) {
    require_same_shape(ctx.x, gy, "ssm_scan_backward");
    const int B = ctx.x.dim(0), C = ctx.x.dim(1), L = ctx.x.dim(2), N = p.state;
    const Tensor a = p.a();
    Tensor gx(ctx.x.shape(), ctx.x.prec());
    // grads w.r.t. the effective a first, then chain through the sigmoid
    Tensor ga(p.a_raw.shape(), p.a_raw.prec());
    if (ctx.x.is_f64())
        scan_bwd<double>(ctx.x.f64(), ctx.h.f64(), a.f64(), p.b.f64(), p.cw.f64(), p.d.f64(),
                         gy.f64(), gx.f64(), ga.f64(), g.b.f64(), g.cw.f64(), g.d.f64(), B, C, L, N);
    else
        scan_bwd<float>(ctx.x.f32(), ctx.h.f32(), a.f32(), p.b.f32(), p.cw.f32(), p.d.f32(),
                        gy.f32(), gx.f32(), ga.f32(), g.b.f32(), g.cw.f32(), g.d.f32(), B, C, L, N);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
        const double av = a.at(i);
        g.a_raw.add_at(i, ga.at(i) * av * (1.0 - av));
    }
    macs::add(2ULL * B * C * L * (3ULL * N + 1));
    return gx;
}

double impulse_response(const SsmParams& p, int channel, long t) {
    if (channel < 0 || channel >= p.channels) fail_shape("impulse_response: channel out of range");
    if (t < 1) fail_shape("impulse_response: lag must be >= 1");
    const std::size_t off = static_cast<std::size_t>(channel) * p.state;
    // sum of cw_n b_n a_n^{t-1}, factored as exp(log-magnitude) per term so
    // large lags underflow gracefully instead of rounding term-by-term
    double out = 0.0;
    for (int n = 0; n < p.state; ++n) {
        const double a = 1.0 / (1.0 + std::exp(-p.a_raw.at(off + n)));
        const double coef = p.cw.at(off + n) * p.b.at(off + n);
        if (coef == 0.0) continue;
        const double logmag = std::log(std::abs(coef)) + static_cast<double>(t - 1) * std::log(a);
        out += (coef < 0 ? -1.0 : 1.0) * std::exp(logmag);
    }
    return out;
}

double impulse_envelope(const SsmParams& p, int channel, long t) {
    const std::size_t off = static_cast<std::size_t>(channel) * p.state;
    double coef = 0.0, amax = 0.0;
    for (int n = 0; n < p.state; ++n) {
        const double a = 1.0 / (1.0 + std::exp(-p.a_raw.at(off + n)));
        coef += std::abs(p.cw.at(off + n) * p.b.at(off + n));
        amax = std::max(amax, a);
    }
    if (coef == 0.0) return 0.0;
    return std::exp(std::log(coef) + static_cast<double>(t - 1) * std::log(amax));
}

}  // namespace psm
