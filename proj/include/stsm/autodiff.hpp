#pragma once

#include <string>
#include <vector>

#include "stsm/network.hpp"
#include "stsm/tape.hpp"

namespace stsm {

// Mean over the batch of -log softmax(logits)[label]. Records the seed
// gradient on the tape when one is supplied.
double softmax_cross_entropy(const Tensor5& logits, const std::vector<int>& labels,
                             Tape* tape = nullptr);

// Walks the tape in reverse from the recorded scalar loss. Returns parameter
// gradients; optionally also the gradient w.r.t. the network input.
GradientSet backward(const Tape& tape, double loss_grad = 1.0, Tensor5* input_grad = nullptr);

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
void sgd_step(ParamStore& params, const GradientSet& grads, double lr, double momentum,
              double weight_decay);

struct FiniteDiffEntry {
    std::string param;
    index_t flat_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool excluded = false;  // perturbation crossed a relu kink or pool tie
};

struct FiniteDiffReport {
    std::vector<FiniteDiffEntry> entries;
    double max_rel_error = 0.0;  // over non-excluded entries
    int checked = 0;
    int excluded = 0;
    bool pass = false;
};

// Central-difference verification of backward() on a network/loss pairing.
// Components whose +h/-h evaluations take a different piecewise-linear
// branch (relu sign flip, max-pool argmax change) are excluded, not failed.
// max_components <= 0 checks every parameter component.
FiniteDiffReport finite_diff_check(const LayerGraph& g, ParamStore& params, const Tensor5& input,
                                   const std::vector<int>& labels, double step, double tolerance,
                                   int max_components = -1, std::uint64_t sample_seed = 1);

}  // namespace stsm
