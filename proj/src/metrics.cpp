#include "psm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace psm {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.at(i) - b.at(i);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse < 1e-12) return 99.0;
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    require_rank(a, 4, "ssim");
    const int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    int win = 11;
    win = std::min(win, H);
    win = std::min(win, W);
    if (win % 2 == 0) win -= 1;
    const double sigma = 1.5;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    {
        const int r = win / 2;
        double sum = 0.0;
        for (int y = 0; y < win; ++y)
            for (int x = 0; x < win; ++x) {
                const double dy = y - r, dx = x - r;
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                g[static_cast<std::size_t>(y) * win + x] = v;
                sum += v;
            }
        for (double& v : g) v /= sum;
    }
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy + win <= H; ++oy)
                for (int ox = 0; ox + win <= W; ++ox) {
                    double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
                    for (int y = 0; y < win; ++y)
                        for (int x = 0; x < win; ++x) {
                            const double wv = g[static_cast<std::size_t>(y) * win + x];
                            const double av = a.at4(bb, c, oy + y, ox + x);
                            const double bv = b.at4(bb, c, oy + y, ox + x);
                            mx += wv * av;
                            my += wv * bv;
                            // grouped so ssim(a, b) == ssim(b, a) bitwise and
                            // ssim(a, a) lands on 1.0 exactly (xx == xy when a == b)
                            xx += wv * (av * av);
                            yy += wv * (bv * bv);
                            xy += wv * (av * bv);
                        }
                    const double vx = xx - mx * mx;
                    const double vy = yy - my * my;
                    const double cov = xy - mx * my;
                    const double num = (2.0 * (mx * my) + c1) * (2.0 * cov + c2);
                    const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                    total += num / den;
                    ++count;
                }
    return count ? total / static_cast<double>(count) : 1.0;
}

}  // namespace psm
