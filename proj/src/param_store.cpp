#include "psm/param_store.hpp"

namespace psm {

void ParamStore::add(std::string name, Tensor* value, Tensor* grad) {
    if (find(name)) fail_shape("duplicate parameter name '" + name + "'");
    require_same_shape(*value, *grad, "param registration");
    refs_.push_back(ParamRef{std::move(name), value, grad});
}

ParamRef* ParamStore::find(const std::string& name) {
    for (ParamRef& r : refs_)
        if (r.name == name) return &r;
    return nullptr;
}

long ParamStore::total_elements() const {
    long n = 0;
    for (const ParamRef& r : refs_) n += static_cast<long>(r.value->numel());
    return n;
}

void ParamStore::zero_grads() {
    for (ParamRef& r : refs_) r.grad->fill(0.0);
}

}  // namespace psm
