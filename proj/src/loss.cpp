#include "psm/loss.hpp"

#include <cmath>

namespace psm {

LossResult l1_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "l1_loss");
    LossResult out;
    out.grad = Tensor(pred.shape(), pred.prec());
    const double inv = 1.0 / static_cast<double>(pred.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double r = pred.at(i) - target.at(i);
        acc += std::abs(r);
        out.grad.set(i, r > 0.0 ? inv : (r < 0.0 ? -inv : 0.0));
    }
    out.value = acc * inv;
    return out;
}

LossResult charbonnier_loss(const Tensor& pred, const Tensor& target, double eps) {
    require_same_shape(pred, target, "charbonnier_loss");
    if (eps <= 0.0) throw ConfigError("charbonnier_loss: eps must be > 0");
    LossResult out;
    out.grad = Tensor(pred.shape(), pred.prec());
    const double inv = 1.0 / static_cast<double>(pred.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double r = pred.at(i) - target.at(i);
        // hypot keeps the zero-residual value exactly eps
        const double s = std::hypot(r, eps);
        acc += s;
        out.grad.set(i, r / s * inv);
    }
    out.value = acc * inv;
    return out;
}

}  // namespace psm
