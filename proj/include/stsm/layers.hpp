#pragma once

#include "stsm/tensor.hpp"

namespace stsm {

// Spatial output extent under the standard padding formula.
inline index_t conv_out_extent(index_t in, index_t k, index_t stride, index_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// 2-D cross-correlation applied independently to every (n, t) slice.
// weight dims: (out_ch, in_ch, k, k, 1); bias dims: (out_ch, 1, 1, 1, 1).
Tensor5 conv2d_forward(const Tensor5& x, const Tensor5& weight, const Tensor5& bias,
                       index_t stride, index_t pad);
Tensor5 conv2d_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& weight,
                        index_t stride, index_t pad, Tensor5& grad_weight, Tensor5& grad_bias);

// Batch statistics are taken per channel over (N, T, H, W).
struct BatchNormSaved {
    std::vector<double> mean;
    std::vector<double> inv_std;
};
Tensor5 batchnorm_train_forward(const Tensor5& x, const Tensor5& gamma, const Tensor5& beta,
                                double eps, BatchNormSaved& saved);
Tensor5 batchnorm_eval_forward(const Tensor5& x, const Tensor5& gamma, const Tensor5& beta,
                               const Tensor5& running_mean, const Tensor5& running_var, double eps);
// Full derivative through the batch statistics.
Tensor5 batchnorm_train_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& gamma,
                                 const BatchNormSaved& saved, Tensor5& grad_gamma, Tensor5& grad_beta);
void batchnorm_update_running(const Tensor5& x, const BatchNormSaved& saved, double momentum,
                              Tensor5& running_mean, Tensor5& running_var);

Tensor5 relu_forward(const Tensor5& x);
Tensor5 relu_backward(const Tensor5& grad_out, const Tensor5& x);  // derivative 0 at x == 0

// Max pooling with no padding; ties resolve to the first index in (h, w)
// scan order, and backward routes the gradient to that index only.
Tensor5 maxpool2d_forward(const Tensor5& x, index_t k, index_t stride, std::vector<index_t>& argmax);
Tensor5 maxpool2d_backward(const Tensor5& grad_out, Dims5 in_dims, const std::vector<index_t>& argmax);

// Global mean over (H, W) per (n, c, t); output extent 1x1.
Tensor5 global_avgpool2d_forward(const Tensor5& x);
Tensor5 global_avgpool2d_backward(const Tensor5& grad_out, Dims5 in_dims);

// Mean over T. The T values are summed in ascending value order so a frame
// permutation cannot perturb the result even in floating point.
Tensor5 temporal_avgpool_forward(const Tensor5& x);
Tensor5 temporal_avgpool_backward(const Tensor5& grad_out, Dims5 in_dims);

// Fully connected layer over the channel axis of an (N, F, 1, 1, 1) input.
// weight dims: (out_features, in_features, 1, 1, 1).
Tensor5 linear_forward(const Tensor5& x, const Tensor5& weight, const Tensor5& bias);
Tensor5 linear_backward(const Tensor5& grad_out, const Tensor5& x, const Tensor5& weight,
                        Tensor5& grad_weight, Tensor5& grad_bias);

}  // namespace stsm
