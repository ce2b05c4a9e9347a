#include "stsm/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace stsm {

namespace {

void check_conv_shapes(const Tensor5& x, const Tensor5& weight, const Tensor5& bias,
                       index_t stride, index_t pad) {
    const Dims5 wd = weight.dims();
    if (wd.h != wd.t) throw ShapeError("conv kernel must be square, got " + wd.str());
    if (x.dims().c != wd.c) {
        throw ShapeError("conv expects " + std::to_string(wd.c) + " input channels, got " +
                         std::to_string(x.dims().c));
    }
    if (bias.dims().n != wd.n) throw ShapeError("conv bias/out_ch mismatch");
    const index_t k = wd.t;
    if (conv_out_extent(x.dims().h, k, stride, pad) < 1 ||
        conv_out_extent(x.dims().w, k, stride, pad) < 1) {
        throw ShapeError("conv output would be empty for input " + x.dims().str());
    }
}

}  // namespace

Tensor5 conv2d_forward(const Tensor5& x, const Tensor5& weight, const Tensor5& bias,
                       index_t stride, index_t pad) {
    check_conv_shapes(x, weight, bias, stride, pad);
    const Dims5 xd = x.dims();
    const index_t oc_n = weight.dims().n, ic_n = weight.dims().c, k = weight.dims().t;
    const index_t oh_n = conv_out_extent(xd.h, k, stride, pad);
    const index_t ow_n = conv_out_extent(xd.w, k, stride, pad);

    Tensor5 y(Dims5{xd.n, oc_n, xd.t, oh_n, ow_n}, 0.0);

    const index_t slices = xd.n * xd.t;
#pragma omp parallel for schedule(static)
    for (index_t s = 0; s < slices; ++s) {
        const index_t n = s / xd.t;
        const index_t t = s % xd.t;
        for (index_t oc = 0; oc < oc_n; ++oc) {
            const double b = bias[oc];
            double* yplane = y.data() + y.offset(n, oc, t, 0, 0);
            for (index_t i = 0; i < oh_n * ow_n; ++i) yplane[i] = b;
            for (index_t ic = 0; ic < ic_n; ++ic) {
                const double* xplane = x.data() + x.offset(n, ic, t, 0, 0);
                const double* wbase = weight.data() + weight.offset(oc, ic, 0, 0, 0);
                for (index_t kh = 0; kh < k; ++kh) {
                    for (index_t kw = 0; kw < k; ++kw) {
                        const double wv = wbase[kh * k + kw];
                        if (wv == 0.0) continue;
                        for (index_t oh = 0; oh < oh_n; ++oh) {
                            const index_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= xd.h) continue;
                            double* yrow = yplane + oh * ow_n;
                            const double* xrow = xplane + ih * xd.w;
                            if (stride == 1) {
                                const index_t iw0 = -pad + kw;
                                const index_t lo = std::max<index_t>(0, -iw0);
                                const index_t hi = std::min(ow_n, xd.w - iw0);
                                for (index_t ow = lo; ow < hi; ++ow) {
                                    yrow[ow] += wv * xrow[iw0 + ow];
                                }
                            } else {
                                for (index_t ow = 0; ow < ow_n; ++ow) {
                                    const index_t iw = ow * stride - pad + kw;
                                    if (iw < 0 || iw >= xd.w) continue;
                                    yrow[ow] += wv * xrow[iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor5 conv2d_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& weight,
                        index_t stride, index_t pad, Tensor5& grad_weight, Tensor5& grad_bias) {
    const Dims5 xd = x.dims();
    const Dims5 gd = grad_out.dims();
    const index_t oc_n = weight.dims().n, ic_n = weight.dims().c, k = weight.dims().t;
    if (gd.c != oc_n || gd.n != xd.n || gd.t != xd.t) {
        throw ShapeError("conv backward grad shape mismatch " + gd.str());
    }

    Tensor5 dx(xd, 0.0);
    const index_t slices = xd.n * xd.t;

    // Input gradient: each (n, t) slice is independent.
#pragma omp parallel for schedule(static)
    for (index_t s = 0; s < slices; ++s) {
        const index_t n = s / xd.t;
        const index_t t = s % xd.t;
        for (index_t oc = 0; oc < oc_n; ++oc) {
            const double* gplane = grad_out.data() + grad_out.offset(n, oc, t, 0, 0);
            for (index_t ic = 0; ic < ic_n; ++ic) {
                double* dxplane = dx.data() + dx.offset(n, ic, t, 0, 0);
                const double* wbase = weight.data() + weight.offset(oc, ic, 0, 0, 0);
                for (index_t kh = 0; kh < k; ++kh) {
                    for (index_t kw = 0; kw < k; ++kw) {
                        const double wv = wbase[kh * k + kw];
                        if (wv == 0.0) continue;
                        for (index_t oh = 0; oh < gd.h; ++oh) {
                            const index_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= xd.h) continue;
                            const double* grow = gplane + oh * gd.w;
                            double* dxrow = dxplane + ih * xd.w;
                            if (stride == 1) {
                                const index_t iw0 = -pad + kw;
                                const index_t lo = std::max<index_t>(0, -iw0);
                                const index_t hi = std::min(gd.w, xd.w - iw0);
                                for (index_t ow = lo; ow < hi; ++ow) {
                                    dxrow[iw0 + ow] += wv * grow[ow];
                                }
                            } else {
                                for (index_t ow = 0; ow < gd.w; ++ow) {
                                    const index_t iw = ow * stride - pad + kw;
                                    if (iw < 0 || iw >= xd.w) continue;
                                    dxrow[iw] += wv * grow[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Weight and bias gradients: parallel over output channels so every
    // accumulator has a single writer and a fixed accumulation order.
#pragma omp parallel for schedule(static)
    for (index_t oc = 0; oc < oc_n; ++oc) {
        double bacc = 0.0;
        for (index_t n = 0; n < xd.n; ++n) {
            for (index_t t = 0; t < xd.t; ++t) {
                const double* gplane = grad_out.data() + grad_out.offset(n, oc, t, 0, 0);
                for (index_t i = 0; i < gd.h * gd.w; ++i) bacc += gplane[i];
                for (index_t ic = 0; ic < ic_n; ++ic) {
                    const double* xplane = x.data() + x.offset(n, ic, t, 0, 0);
                    double* dwbase = grad_weight.data() + grad_weight.offset(oc, ic, 0, 0, 0);
                    for (index_t kh = 0; kh < k; ++kh) {
                        for (index_t kw = 0; kw < k; ++kw) {
                            double acc = 0.0;
                            for (index_t oh = 0; oh < gd.h; ++oh) {
                                const index_t ih = oh * stride - pad + kh;
                                if (ih < 0 || ih >= xd.h) continue;
                                const double* grow = gplane + oh * gd.w;
                                const double* xrow = xplane + ih * xd.w;
                                if (stride == 1) {
                                    const index_t iw0 = -pad + kw;
                                    const index_t lo = std::max<index_t>(0, -iw0);
                                    const index_t hi = std::min(gd.w, xd.w - iw0);
                                    for (index_t ow = lo; ow < hi; ++ow) acc += grow[ow] * xrow[iw0 + ow];
                                } else {
                                    for (index_t ow = 0; ow < gd.w; ++ow) {
                                        const index_t iw = ow * stride - pad + kw;
                                        if (iw < 0 || iw >= xd.w) continue;
                                        acc += grow[ow] * xrow[iw];
                                    }
                                }
                            }
                            dwbase[kh * k + kw] += acc;
                        }
                    }
                }
            }
        }
        grad_bias[oc] += bacc;
    }
    return dx;
}

Tensor5 batchnorm_train_forward(const Tensor5& x, const Tensor5& gamma, const Tensor5& beta,
                                double eps, BatchNormSaved& saved) {
    const Dims5 d = x.dims();
    if (gamma.dims().n != d.c || beta.dims().n != d.c) {
        throw ShapeError("batchnorm parameter/channel mismatch for input " + d.str());
    }
    const index_t per_channel = d.n * d.t * d.h * d.w;
    saved.mean.assign(static_cast<std::size_t>(d.c), 0.0);
    saved.inv_std.assign(static_cast<std::size_t>(d.c), 0.0);

    Tensor5 y(d, 0.0);
#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < d.c; ++c) {
        double sum = 0.0;
        for (index_t n = 0; n < d.n; ++n) {
            const double* p = x.data() + x.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) sum += p[i];
        }
        const double mean = sum / static_cast<double>(per_channel);
        double var_sum = 0.0;
        for (index_t n = 0; n < d.n; ++n) {
            const double* p = x.data() + x.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                const double dv = p[i] - mean;
                var_sum += dv * dv;
            }
        }
        const double var = var_sum / static_cast<double>(per_channel);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        saved.mean[static_cast<std::size_t>(c)] = mean;
        saved.inv_std[static_cast<std::size_t>(c)] = inv_std;

        const double g = gamma[c], b = beta[c];
        for (index_t n = 0; n < d.n; ++n) {
            const double* p = x.data() + x.offset(n, c, 0, 0, 0);
            double* q = y.data() + y.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                q[i] = g * ((p[i] - mean) * inv_std) + b;
            }
        }
    }
    return y;
}

Tensor5 batchnorm_eval_forward(const Tensor5& x, const Tensor5& gamma, const Tensor5& beta,
                               const Tensor5& running_mean, const Tensor5& running_var, double eps) {
    const Dims5 d = x.dims();
    if (gamma.dims().n != d.c) throw ShapeError("batchnorm parameter/channel mismatch");
    Tensor5 y(d, 0.0);
#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < d.c; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var[c] + eps);
        const double mean = running_mean[c];
        const double g = gamma[c], b = beta[c];
        for (index_t n = 0; n < d.n; ++n) {
            const double* p = x.data() + x.offset(n, c, 0, 0, 0);
            double* q = y.data() + y.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                q[i] = g * ((p[i] - mean) * inv_std) + b;
            }
        }
    }
    return y;
}

Tensor5 batchnorm_train_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& gamma,
                                 const BatchNormSaved& saved, Tensor5& grad_gamma, Tensor5& grad_beta) {
    const Dims5 d = x.dims();
    const index_t m_count = d.n * d.t * d.h * d.w;
    const double m = static_cast<double>(m_count);
    Tensor5 dx(d, 0.0);

#pragma omp parallel for schedule(static)
    for (index_t c = 0; c < d.c; ++c) {
        const double mean = saved.mean[static_cast<std::size_t>(c)];
        const double inv_std = saved.inv_std[static_cast<std::size_t>(c)];
        const double g = gamma[c];

        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (index_t n = 0; n < d.n; ++n) {
            const double* gp = grad_out.data() + grad_out.offset(n, c, 0, 0, 0);
            const double* xp = x.data() + x.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                const double xhat = (xp[i] - mean) * inv_std;
                sum_dy += gp[i];
                sum_dy_xhat += gp[i] * xhat;
            }
        }
        grad_beta[c] += sum_dy;
        grad_gamma[c] += sum_dy_xhat;

        // dx = g * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
        const double k = g * inv_std / m;
        for (index_t n = 0; n < d.n; ++n) {
            const double* gp = grad_out.data() + grad_out.offset(n, c, 0, 0, 0);
            const double* xp = x.data() + x.offset(n, c, 0, 0, 0);
            double* dp = dx.data() + dx.offset(n, c, 0, 0, 0);
            for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                const double xhat = (xp[i] - mean) * inv_std;
                dp[i] = k * (m * gp[i] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    return dx;
}

void batchnorm_update_running(const Tensor5& x, const BatchNormSaved& saved, double momentum,
                              Tensor5& running_mean, Tensor5& running_var) {
    const Dims5 d = x.dims();
    for (index_t c = 0; c < d.c; ++c) {
        const double mean = saved.mean[static_cast<std::size_t>(c)];
        const double inv_std = saved.inv_std[static_cast<std::size_t>(c)];
        // var is recovered from inv_std; both normalization and the running
        // average use the biased (1/M) variance.
        const double var = 1.0 / (inv_std * inv_std);
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
    }
}

Tensor5 relu_forward(const Tensor5& x) {
    Tensor5 y = x;
    double* p = y.data();
    for (index_t i = 0; i < y.size(); ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
    return y;
}

Tensor5 relu_backward(const Tensor5& grad_out, const Tensor5& x) {
    Tensor5 dx = grad_out;
    double* dp = dx.data();
    const double* xp = x.data();
    for (index_t i = 0; i < dx.size(); ++i) {
        if (!(xp[i] > 0.0)) dp[i] = 0.0;
    }
    return dx;
}

Tensor5 maxpool2d_forward(const Tensor5& x, index_t k, index_t stride, std::vector<index_t>& argmax) {
    const Dims5 d = x.dims();
    if (d.h < k || d.w < k) {
        throw ShapeError("maxpool window " + std::to_string(k) + " larger than input " + d.str());
    }
    const index_t oh_n = (d.h - k) / stride + 1;
    const index_t ow_n = (d.w - k) / stride + 1;
    Tensor5 y(Dims5{d.n, d.c, d.t, oh_n, ow_n}, 0.0);
    argmax.assign(static_cast<std::size_t>(y.size()), 0);

    index_t out_i = 0;
    for (index_t n = 0; n < d.n; ++n)
        for (index_t c = 0; c < d.c; ++c)
            for (index_t t = 0; t < d.t; ++t)
                for (index_t oh = 0; oh < oh_n; ++oh)
                    for (index_t ow = 0; ow < ow_n; ++ow, ++out_i) {
                        double best = -std::numeric_limits<double>::infinity();
                        index_t best_idx = 0;
                        for (index_t kh = 0; kh < k; ++kh) {
                            for (index_t kw = 0; kw < k; ++kw) {
                                const index_t ih = oh * stride + kh;
                                const index_t iw = ow * stride + kw;
                                const double v = x.at(n, c, t, ih, iw);
                                if (v > best) {  // strict: ties keep the first scan index
                                    best = v;
                                    best_idx = x.offset(n, c, t, ih, iw);
                                }
                            }
                        }
                        y[out_i] = best;
                        argmax[static_cast<std::size_t>(out_i)] = best_idx;
                    }
    return y;
}

Tensor5 maxpool2d_backward(const Tensor5& grad_out, Dims5 in_dims, const std::vector<index_t>& argmax) {
    Tensor5 dx(in_dims, 0.0);
    for (index_t i = 0; i < grad_out.size(); ++i) {
        dx[argmax[static_cast<std::size_t>(i)]] += grad_out[i];
    }
    return dx;
}

Tensor5 global_avgpool2d_forward(const Tensor5& x) {
    const Dims5 d = x.dims();
    Tensor5 y(Dims5{d.n, d.c, d.t, 1, 1}, 0.0);
    const double denom = static_cast<double>(d.h * d.w);
    for (index_t n = 0; n < d.n; ++n)
        for (index_t c = 0; c < d.c; ++c)
            for (index_t t = 0; t < d.t; ++t) {
                const double* p = x.data() + x.offset(n, c, t, 0, 0);
                double acc = 0.0;
                for (index_t i = 0; i < d.h * d.w; ++i) acc += p[i];
                y.at(n, c, t, 0, 0) = acc / denom;
            }
    return y;
}

Tensor5 global_avgpool2d_backward(const Tensor5& grad_out, Dims5 in_dims) {
    Tensor5 dx(in_dims, 0.0);
    const double denom = static_cast<double>(in_dims.h * in_dims.w);
    for (index_t n = 0; n < in_dims.n; ++n)
        for (index_t c = 0; c < in_dims.c; ++c)
            for (index_t t = 0; t < in_dims.t; ++t) {
                const double g = grad_out.at(n, c, t, 0, 0) / denom;
                double* p = dx.data() + dx.offset(n, c, t, 0, 0);
                for (index_t i = 0; i < in_dims.h * in_dims.w; ++i) p[i] = g;
            }
    return dx;
}

Tensor5 temporal_avgpool_forward(const Tensor5& x) {
    const Dims5 d = x.dims();
    Tensor5 y(Dims5{d.n, d.c, 1, d.h, d.w}, 0.0);
    std::vector<double> vals(static_cast<std::size_t>(d.t));
    const double denom = static_cast<double>(d.t);
    for (index_t n = 0; n < d.n; ++n)
        for (index_t c = 0; c < d.c; ++c)
            for (index_t h = 0; h < d.h; ++h)
                for (index_t w = 0; w < d.w; ++w) {
                    for (index_t t = 0; t < d.t; ++t) vals[static_cast<std::size_t>(t)] = x.at(n, c, t, h, w);
                    std::sort(vals.begin(), vals.end());
                    double acc = 0.0;
                    for (double v : vals) acc += v;
                    y.at(n, c, 0, h, w) = acc / denom;
                }
    return y;
}

Tensor5 temporal_avgpool_backward(const Tensor5& grad_out, Dims5 in_dims) {
    Tensor5 dx(in_dims, 0.0);
    const double denom = static_cast<double>(in_dims.t);
    for (index_t n = 0; n < in_dims.n; ++n)
        for (index_t c = 0; c < in_dims.c; ++c)
            for (index_t t = 0; t < in_dims.t; ++t)
                for (index_t h = 0; h < in_dims.h; ++h)
                    for (index_t w = 0; w < in_dims.w; ++w)
                        dx.at(n, c, t, h, w) = grad_out.at(n, c, 0, h, w) / denom;
    return dx;
}

Tensor5 linear_forward(const Tensor5& x, const Tensor5& weight, const Tensor5& bias) {
    const Dims5 d = x.dims();
    if (d.t != 1 || d.h != 1 || d.w != 1) {
        throw ShapeError("linear layer expects (N,F,1,1,1) input, got " + d.str());
    }
    const index_t out_n = weight.dims().n;
    const index_t in_n = weight.dims().c;
    if (in_n != d.c) {
        throw ShapeError("linear expects " + std::to_string(in_n) + " features, got " +
                         std::to_string(d.c));
    }
    Tensor5 y(Dims5{d.n, out_n, 1, 1, 1}, 0.0);
    for (index_t n = 0; n < d.n; ++n) {
        const double* xp = x.data() + x.offset(n, 0, 0, 0, 0);
        for (index_t o = 0; o < out_n; ++o) {
            const double* wp = weight.data() + weight.offset(o, 0, 0, 0, 0);
            double acc = bias[o];
            for (index_t i = 0; i < in_n; ++i) acc += wp[i] * xp[i];
            y.at(n, o, 0, 0, 0) = acc;
        }
    }
    return y;
}

Tensor5 linear_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& weight,
                        Tensor5& grad_weight, Tensor5& grad_bias) {
    const Dims5 d = x.dims();
    const index_t out_n = weight.dims().n;
    const index_t in_n = weight.dims().c;
    Tensor5 dx(d, 0.0);
    for (index_t n = 0; n < d.n; ++n) {
        const double* xp = x.data() + x.offset(n, 0, 0, 0, 0);
        double* dxp = dx.data() + dx.offset(n, 0, 0, 0, 0);
        for (index_t o = 0; o < out_n; ++o) {
            const double g = grad_out.at(n, o, 0, 0, 0);
            const double* wp = weight.data() + weight.offset(o, 0, 0, 0, 0);
            double* dwp = grad_weight.data() + grad_weight.offset(o, 0, 0, 0, 0);
            grad_bias[o] += g;
            for (index_t i = 0; i < in_n; ++i) {
                dwp[i] += g * xp[i];
                dxp[i] += g * wp[i];
            }
        }
    }
    return dx;
}

}  // namespace stsm
