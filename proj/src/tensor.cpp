#include "stsm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stsm {

namespace {
index_t g_max_elements = index_t{1} << 28;  // ~2 GiB of doubles
}

std::string Dims5::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << t << "," << h << "," << w << ")";
    return os.str();
}

index_t Tensor5::max_elements() { return g_max_elements; }
void Tensor5::set_max_elements(index_t n) { g_max_elements = n; }

Tensor5::Tensor5(Dims5 dims, double fill) : dims_(dims) {
    const std::array<index_t, 5> d{dims.n, dims.c, dims.t, dims.h, dims.w};
    index_t count = 1;
    for (index_t x : d) {
        if (x < 1) throw ShapeError("tensor dims must all be >= 1, got " + dims.str());
        if (count > g_max_elements / x) {
            throw ShapeError("tensor " + dims.str() + " exceeds element budget " +
                             std::to_string(g_max_elements));
        }
        count *= x;
    }
    data_.assign(static_cast<std::size_t>(count), fill);
}

Tensor5 elementwise(const Tensor5& a, const Tensor5& b, EwOp op) {
    if (!(a.dims() == b.dims())) {
        throw ShapeError("elementwise shape mismatch: " + a.dims().str() + " vs " + b.dims().str());
    }
    Tensor5 out = a;
    double* o = out.data();
    const double* bp = b.data();
    const index_t n = a.size();
    switch (op) {
        case EwOp::add: for (index_t i = 0; i < n; ++i) o[i] += bp[i]; break;
        case EwOp::sub: for (index_t i = 0; i < n; ++i) o[i] -= bp[i]; break;
        case EwOp::mul: for (index_t i = 0; i < n; ++i) o[i] *= bp[i]; break;
    }
    return out;
}

Tensor5 reduce(const Tensor5& a, const std::vector<Axis>& axes, ReduceOp op) {
    bool red[5] = {false, false, false, false, false};
    for (Axis ax : axes) red[static_cast<int>(ax)] = true;

    const Dims5 in = a.dims();
    Dims5 od = in;
    if (red[0]) od.n = 1;
    if (red[1]) od.c = 1;
    if (red[2]) od.t = 1;
    if (red[3]) od.h = 1;
    if (red[4]) od.w = 1;

    const double init = (op == ReduceOp::max) ? -std::numeric_limits<double>::infinity() : 0.0;
    Tensor5 out(od, init);

    // Flat-order walk over the input; each output cell accumulates in the
    // order its elements appear in the input.
    for (index_t n = 0; n < in.n; ++n)
        for (index_t c = 0; c < in.c; ++c)
            for (index_t t = 0; t < in.t; ++t)
                for (index_t h = 0; h < in.h; ++h)
                    for (index_t w = 0; w < in.w; ++w) {
                        double& cell = out.at(red[0] ? 0 : n, red[1] ? 0 : c, red[2] ? 0 : t,
                                              red[3] ? 0 : h, red[4] ? 0 : w);
                        const double v = a.at(n, c, t, h, w);
                        if (op == ReduceOp::max) {
                            cell = std::max(cell, v);
                        } else {
                            cell += v;
                        }
                    }

    if (op == ReduceOp::mean) {
        double denom = 1.0;
        for (int i = 0; i < 5; ++i)
            if (red[i]) denom *= static_cast<double>(in[i]);
        double* o = out.data();
        for (index_t i = 0; i < out.size(); ++i) o[i] /= denom;
    }
    return out;
}

Tensor5 scale(const Tensor5& a, double s) {
    Tensor5 out = a;
    double* o = out.data();
    for (index_t i = 0; i < out.size(); ++i) o[i] *= s;
    return out;
}

void axpy(double alpha, const Tensor5& x, Tensor5& y) {
    if (!(x.dims() == y.dims())) {
        throw ShapeError("axpy shape mismatch: " + x.dims().str() + " vs " + y.dims().str());
    }
    const double* xp = x.data();
    double* yp = y.data();
    for (index_t i = 0; i < x.size(); ++i) yp[i] += alpha * xp[i];
}

double dot(const Tensor5& a, const Tensor5& b) {
    if (!(a.dims() == b.dims())) {
        throw ShapeError("dot shape mismatch: " + a.dims().str() + " vs " + b.dims().str());
    }
    double acc = 0.0;
    const double* ap = a.data();
    const double* bp = b.data();
    for (index_t i = 0; i < a.size(); ++i) acc += ap[i] * bp[i];
    return acc;
}

double l2_norm(const Tensor5& a) { return std::sqrt(dot(a, a)); }

double total_sum(const Tensor5& a) {
    double acc = 0.0;
    const double* p = a.data();
    for (index_t i = 0; i < a.size(); ++i) acc += p[i];
    return acc;
}

double max_abs(const Tensor5& a) {
    double m = 0.0;
    const double* p = a.data();
    for (index_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(p[i]));
    return m;
}

double max_abs_diff(const Tensor5& a, const Tensor5& b) {
    if (!(a.dims() == b.dims())) {
        throw ShapeError("max_abs_diff shape mismatch: " + a.dims().str() + " vs " + b.dims().str());
    }
    double m = 0.0;
    const double* ap = a.data();
    const double* bp = b.data();
    for (index_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(ap[i] - bp[i]));
    return m;
}

bool bit_equal(const Tensor5& a, const Tensor5& b) {
    if (!(a.dims() == b.dims())) return false;
    const double* ap = a.data();
    const double* bp = b.data();
    for (index_t i = 0; i < a.size(); ++i)
        if (ap[i] != bp[i]) return false;
    return true;
}

}  // namespace stsm
