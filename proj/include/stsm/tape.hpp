#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stsm/tensor.hpp"

namespace stsm {

// Gradients keyed by parameter name, same shape as the parameter.
struct GradientSet {
    std::map<std::string, Tensor5> grads;

    Tensor5& accumulate(const std::string& key, Dims5 dims) {
        auto it = grads.find(key);
        if (it == grads.end()) it = grads.emplace(key, Tensor5::zeros(dims)).first;
        return it->second;
    }
};

// Branch decisions taken during a forward pass: relu sign masks and max-pool
// argmax choices, in execution order. Two evaluations with equal signatures
// took the same piecewise-linear branch everywhere, which is what makes a
// central finite difference trustworthy.
struct BranchSignature {
    std::vector<std::vector<std::uint8_t>> relu_masks;
    std::vector<std::vector<index_t>> pool_argmax;

    bool operator==(const BranchSignature&) const = default;
};

// One executed primitive with everything its backward rule needs. Records
// own copies of the tensors they save; parameters enter as copies too, so
// backward never consults the live parameter store.
struct OpRecord {
    virtual ~OpRecord() = default;
    // Consumes the gradient w.r.t. this op's output, accumulates parameter
    // gradients, and returns the gradient w.r.t. its input.
    virtual Tensor5 backward(const Tensor5& grad_out, GradientSet& grads) const = 0;
    virtual void append_signature(BranchSignature&) const {}
};

// Ordered record of one forward evaluation. backward() requires the head to
// be a recorded scalar loss.
struct Tape {
    std::vector<std::unique_ptr<OpRecord>> ops;

    bool loss_recorded = false;
    double loss_value = 0.0;
    Tensor5 loss_logit_grad;  // d(loss)/d(logits), seeded by the loss op

    BranchSignature signature() const {
        BranchSignature sig;
        for (const auto& op : ops) op->append_signature(sig);
        return sig;
    }
};

}  // namespace stsm
