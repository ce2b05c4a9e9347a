#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stsm/errors.hpp"

namespace stsm {

using index_t = std::int64_t;

enum class Axis : int { N = 0, C = 1, T = 2, H = 3, W = 4 };

struct Dims5 {
    index_t n = 1, c = 1, t = 1, h = 1, w = 1;

    index_t count() const { return n * c * t * h * w; }
    index_t operator[](int i) const {
        const std::array<index_t, 5> v{n, c, t, h, w};
        return v[static_cast<std::size_t>(i)];
    }
    bool operator==(const Dims5&) const = default;
    std::string str() const;
};

// Dense rank-5 tensor of doubles, contiguous in (n, c, t, h, w) row-major
// order: element (n,c,t,h,w) lives at ((((n*C+c)*T+t)*H+h)*W+w).
class Tensor5 {
public:
    Tensor5() : dims_{}, data_(1, 0.0) {}
    Tensor5(Dims5 dims, double fill);

    static Tensor5 zeros(Dims5 dims) { return Tensor5(dims, 0.0); }
    static Tensor5 ones(Dims5 dims) { return Tensor5(dims, 1.0); }

    const Dims5& dims() const { return dims_; }
    index_t size() const { return static_cast<index_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    index_t offset(index_t n, index_t c, index_t t, index_t h, index_t w) const {
        return ((((n * dims_.c + c) * dims_.t + t) * dims_.h + h) * dims_.w + w);
    }
    double at(index_t n, index_t c, index_t t, index_t h, index_t w) const {
        return data_[static_cast<std::size_t>(offset(n, c, t, h, w))];
    }
    double& at(index_t n, index_t c, index_t t, index_t h, index_t w) {
        return data_[static_cast<std::size_t>(offset(n, c, t, h, w))];
    }
    double operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }

    // Memory budget for a single allocation, in elements. Guards against
    // runaway dims in configs; adjustable for large deliberate runs.
    static index_t max_elements();
    static void set_max_elements(index_t n);

private:
    Dims5 dims_;
    std::vector<double> data_;
};

enum class EwOp { add, sub, mul };
enum class ReduceOp { sum, mean, max };

// Elementwise combine; dims must match exactly.
Tensor5 elementwise(const Tensor5& a, const Tensor5& b, EwOp op);

// Reduce the given axes to extent 1. Accumulation visits elements in flat
// index order with a single accumulator per output cell.
Tensor5 reduce(const Tensor5& a, const std::vector<Axis>& axes, ReduceOp op);

// In-place scalar helpers used when composing linear operations.
Tensor5 scale(const Tensor5& a, double s);
void axpy(double alpha, const Tensor5& x, Tensor5& y);  // y += alpha * x

double dot(const Tensor5& a, const Tensor5& b);  // flat-order accumulation
double l2_norm(const Tensor5& a);
double total_sum(const Tensor5& a);
double max_abs(const Tensor5& a);
double max_abs_diff(const Tensor5& a, const Tensor5& b);
bool bit_equal(const Tensor5& a, const Tensor5& b);

}  // namespace stsm
