#pragma once

#include <string>
#include <vector>

#include "psm/tensor.hpp"

namespace psm {

// Flat view over a model's parameters. Modules register (name, value, grad)
// triples; the optimizer, checkpoint codec and gradient checker all walk the
// same list. Pointers are borrowed, so rebuild the store if the model moves.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

class ParamStore {
  public:
    void add(std::string name, Tensor* value, Tensor* grad);

    const std::vector<ParamRef>& refs() const { return refs_; }
    std::vector<ParamRef>& refs() { return refs_; }

    // nullptr when absent
    ParamRef* find(const std::string& name);

    size_t size() const { return refs_.size(); }
    long total_elements() const;
    void zero_grads();

  private:
    std::vector<ParamRef> refs_;
};

}  // namespace psm
