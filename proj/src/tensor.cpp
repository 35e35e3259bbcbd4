#include "psm/tensor.hpp"

#include <cmath>
#include <cstring>

namespace psm {

Tensor::Tensor(Shape shape, Precision p) : shape_(std::move(shape)), prec_(p) {
    if (shape_.empty() || shape_.size() > 4) fail_shape("tensor rank must be 1..4, got " + shape_str(shape_));
    for (int d : shape_)
        if (d < 1) fail_shape("tensor dims must be >= 1, got " + shape_str(shape_));
    numel_ = shape_numel(shape_);
    if (prec_ == Precision::f64)
        d_.assign(numel_, 0.0);
    else
        f_.assign(numel_, 0.0f);
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& v) {
    Tensor t(std::move(shape));
    if (v.size() != t.numel())
        fail_shape("from_values: " + std::to_string(v.size()) + " values for shape " + shape_str(t.shape()));
    for (std::size_t i = 0; i < v.size(); ++i) t.set(i, v[i]);
    return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

Tensor Tensor::rand_normal(Shape shape, Rng& rng, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(mean, stddev));
    return t;
}

Tensor Tensor::cast(Precision p) const {
    if (p == prec_) return *this;
    Tensor t(shape_, p);
    for (std::size_t i = 0; i < numel_; ++i) t.set(i, at(i));
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel_)
        fail_shape("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + ": element count differs");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

void Tensor::fill(double v) {
    if (is_f64())
        d_.assign(numel_, v);
    else
        f_.assign(numel_, static_cast<float>(v));
}

bool Tensor::all_finite() const {
    for (std::size_t i = 0; i < numel_; ++i)
        if (!std::isfinite(at(i))) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        fail_shape(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        fail_shape(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) || a.prec() != b.prec()) return false;
    if (a.is_f64()) return std::memcmp(a.f64(), b.f64(), a.numel() * sizeof(double)) == 0;
    return std::memcmp(a.f32(), b.f32(), a.numel() * sizeof(float)) == 0;
}

}  // namespace psm
