#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "psm/common.hpp"
#include "psm/rng.hpp"

namespace psm {

// Dense row-major tensor, rank 1..4. Feature maps use the (batch, channels,
// height, width) convention with width fastest; token sequences are
// (batch, channels, length). Storage precision is fixed at construction
// from the global mode.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape) : Tensor(std::move(shape), precision()) {}
    Tensor(Shape shape, Precision p);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor from_values(Shape shape, const std::vector<double>& v);
    static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi);
    static Tensor rand_normal(Shape shape, Rng& rng, double mean, double stddev);

    bool defined() const { return !shape_.empty(); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return numel_; }
    Precision prec() const { return prec_; }
    bool is_f64() const { return prec_ == Precision::f64; }

    double* f64() {
        assert(prec_ == Precision::f64);
        return d_.data();
    }
    const double* f64() const {
        assert(prec_ == Precision::f64);
        return d_.data();
    }
    float* f32() {
        assert(prec_ == Precision::f32);
        return f_.data();
    }
    const float* f32() const {
        assert(prec_ == Precision::f32);
        return f_.data();
    }

    // element access through the precision branch; fine for cold paths
    double at(std::size_t i) const { return is_f64() ? d_[i] : static_cast<double>(f_[i]); }
    void set(std::size_t i, double v) {
        if (is_f64())
            d_[i] = v;
        else
            f_[i] = static_cast<float>(v);
    }
    void add_at(std::size_t i, double v) { set(i, at(i) + v); }

    std::size_t idx4(int b, int c, int h, int w) const {
        return ((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    double at4(int b, int c, int h, int w) const { return at(idx4(b, c, h, w)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor clone() const { return *this; }
    Tensor cast(Precision p) const;
    // same data, new shape (numel must match)
    Tensor reshaped(Shape shape) const;

    void fill(double v);
    bool all_finite() const;

  private:
    Shape shape_;
    std::size_t numel_ = 0;
    Precision prec_ = Precision::f64;
    std::vector<float> f_;
    std::vector<double> d_;
};

// throws ShapeError naming both shapes unless equal
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank(const Tensor& t, int rank, const char* op);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace psm
