#include "psm/optim.hpp"

#include <cmath>

namespace psm {

void AdamState::init(const ParamStore& ps) {
    step = 0;
    m.clear();
    v.clear();
    for (const ParamRef& r : ps.refs()) {
        m.emplace_back(r.value->shape(), r.value->prec());
        v.emplace_back(r.value->shape(), r.value->prec());
    }
}

void adam_step(ParamStore& ps, AdamState& st, const AdamConfig& cfg) {
    if (!st.initialized()) st.init(ps);
    if (st.m.size() != ps.size()) fail_shape("adam_step: moment buffers do not match store");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t p = 0; p < ps.size(); ++p) {
        ParamRef& r = ps.refs()[p];
        Tensor& mp = st.m[p];
        Tensor& vp = st.v[p];
        for (std::size_t i = 0; i < r.value->numel(); ++i) {
            const double g = r.grad->at(i);
            const double mi = cfg.beta1 * mp.at(i) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * vp.at(i) + (1.0 - cfg.beta2) * g * g;
            mp.set(i, mi);
            vp.set(i, vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            r.value->set(i, r.value->at(i) - cfg.lr * update);
        }
        r.grad->fill(0.0);
    }
}

}  // namespace psm
