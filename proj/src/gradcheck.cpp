#include "psm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "psm/rng.hpp"

namespace psm {

double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, int max_coords, Rng& rng) {
    std::vector<std::size_t> idx;
    if (max_coords <= 0 || static_cast<std::size_t>(max_coords) >= n) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
    for (int i = 0; i < max_coords; ++i) idx.push_back(static_cast<std::size_t>(rng.next_u64() % n));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

void check_one(Tensor& t, const Tensor& grad, const std::string& name,
               const std::function<double()>& objective, const std::vector<double>& steps,
               int max_coords, Rng& rng, GradReport& rep) {
    for (std::size_t i : pick_coords(t.numel(), max_coords, rng)) {
        const double saved = t.at(i);
        double err = std::numeric_limits<double>::infinity();
        for (double step : steps) {
            t.set(i, saved + step);
            const double up = objective();
            t.set(i, saved - step);
            const double down = objective();
            t.set(i, saved);
            const double numeric = (up - down) / (2.0 * step);
            err = std::min(err, rel_err(grad.at(i), numeric));
        }
        rep.checked++;
        if (err > rep.max_rel) {
            rep.max_rel = err;
            rep.worst = name + "[" + std::to_string(i) + "]";
        }
    }
}

}  // namespace

GradReport check_param_grads(ParamStore& ps, const std::function<double()>& objective,
                             const std::vector<double>& steps, int max_coords, uint64_t seed) {
    GradReport rep;
    Rng rng(mix_seed(seed, "gradcheck"));
    for (ParamRef& r : ps.refs())
        check_one(*r.value, *r.grad, r.name, objective, steps, max_coords, rng, rep);
    return rep;
}

GradReport check_param_grads(ParamStore& ps, const std::function<double()>& objective, double step,
                             int max_coords, uint64_t seed) {
    return check_param_grads(ps, objective, std::vector<double>{step}, max_coords, seed);
}

GradReport check_tensor_grad(Tensor& x, const Tensor& gx, const std::function<double()>& objective,
                             const std::vector<double>& steps, int max_coords, uint64_t seed,
                             const std::string& name) {
    GradReport rep;
    Rng rng(mix_seed(seed, "gradcheck-input"));
    check_one(x, gx, name, objective, steps, max_coords, rng, rep);
    return rep;
}

GradReport check_tensor_grad(Tensor& x, const Tensor& gx, const std::function<double()>& objective,
                             double step, int max_coords, uint64_t seed, const std::string& name) {
    return check_tensor_grad(x, gx, objective, std::vector<double>{step}, max_coords, seed, name);
}

}  // namespace psm
