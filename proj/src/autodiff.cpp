#include "stsm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "stsm/rng.hpp"

namespace stsm {

double softmax_cross_entropy(const Tensor5& logits, const std::vector<int>& labels, Tape* tape) {
    const Dims5 d = logits.dims();
    if (d.t != 1 || d.h != 1 || d.w != 1) {
        throw ContractError("loss expects (N,K,1,1,1) logits, got " + d.str());
    }
    if (static_cast<index_t>(labels.size()) != d.n) {
        throw ContractError("label count " + std::to_string(labels.size()) +
                            " does not match batch size " + std::to_string(d.n));
    }
    const index_t k = d.c;
    for (int label : labels) {
        if (label < 0 || label >= k) {
            throw ContractError("label " + std::to_string(label) + " out of range [0," +
                                std::to_string(k) + ")");
        }
    }

    Tensor5 probs(d, 0.0);
    double loss_sum = 0.0;
    for (index_t n = 0; n < d.n; ++n) {
        const double* row = logits.data() + logits.offset(n, 0, 0, 0, 0);
        double m = row[0];
        for (index_t c = 1; c < k; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (index_t c = 0; c < k; ++c) z += std::exp(row[c] - m);
        const double log_z = std::log(z);
        const int label = labels[static_cast<std::size_t>(n)];
        loss_sum += log_z - (row[label] - m);
        double* prow = probs.data() + probs.offset(n, 0, 0, 0, 0);
        for (index_t c = 0; c < k; ++c) prow[c] = std::exp(row[c] - m) / z;
    }
    const double loss = loss_sum / static_cast<double>(d.n);

    if (tape) {
        Tensor5 seed = probs;
        const double inv_n = 1.0 / static_cast<double>(d.n);
        for (index_t n = 0; n < d.n; ++n) {
            seed.at(n, labels[static_cast<std::size_t>(n)], 0, 0, 0) -= 1.0;
        }
        for (index_t i = 0; i < seed.size(); ++i) seed[i] *= inv_n;
        tape->loss_recorded = true;
        tape->loss_value = loss;
        tape->loss_logit_grad = std::move(seed);
    }
    return loss;
}

GradientSet backward(const Tape& tape, double loss_grad, Tensor5* input_grad) {
    if (!tape.loss_recorded) {
        throw ContractError("backward requires a tape ending in a recorded scalar loss");
    }
    GradientSet grads;
    Tensor5 g = scale(tape.loss_logit_grad, loss_grad);
    for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) {
        g = (*it)->backward(g, grads);
    }
    if (input_grad) *input_grad = std::move(g);
    return grads;
}

void sgd_step(ParamStore& params, const GradientSet& grads, double lr, double momentum,
              double weight_decay) {
    for (auto& [key, param] : params.tensors) {
        auto git = grads.grads.find(key);
        if (git == grads.grads.end()) continue;
        const Tensor5& grad = git->second;
        if (!(grad.dims() == param.dims())) {
            throw ContractError("gradient/parameter shape mismatch for '" + key + "'");
        }
        auto vit = params.momentum.find(key);
        if (vit == params.momentum.end()) {
            vit = params.momentum.emplace(key, Tensor5::zeros(param.dims())).first;
        }
        Tensor5& vel = vit->second;
        for (index_t i = 0; i < param.size(); ++i) {
            const double step = grad[i] + weight_decay * param[i];
            vel[i] = momentum * vel[i] + step;
            param[i] -= lr * vel[i];
        }
    }
}

FiniteDiffReport finite_diff_check(const LayerGraph& g, ParamStore& params, const Tensor5& input,
                                   const std::vector<int>& labels, double step, double tolerance,
                                   int max_components, std::uint64_t sample_seed) {
    if (step <= 0.0) throw ContractError("finite difference step must be positive");

    // Analytic pass. Running statistics stay frozen so every evaluation sees
    // the same function of the parameters.
    ForwardOptions opts;
    opts.training = true;
    opts.update_running_stats = false;

    Tape tape;
    opts.tape = &tape;
    Tensor5 logits = forward_network(g, params, input, opts);
    softmax_cross_entropy(logits, labels, &tape);
    GradientSet grads = backward(tape);
    const BranchSignature base_sig = tape.signature();
    opts.tape = nullptr;

    // Collect (param, index) candidates, then sample evenly if capped.
    std::vector<std::pair<std::string, index_t>> candidates;
    for (const auto& [key, t] : params.tensors) {
        for (index_t i = 0; i < t.size(); ++i) candidates.emplace_back(key, i);
    }
    std::vector<std::pair<std::string, index_t>> chosen;
    if (max_components > 0 && static_cast<std::size_t>(max_components) < candidates.size()) {
        Rng rng(Rng::derive(sample_seed, 0xfd));
        std::vector<index_t> idx(candidates.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<index_t>(i);
        rng.shuffle(idx);
        for (int i = 0; i < max_components; ++i) {
            chosen.push_back(candidates[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
        }
    } else {
        chosen = std::move(candidates);
    }

    auto eval_loss = [&](BranchSignature* sig) {
        Tape t;
        ForwardOptions o;
        o.training = true;
        o.update_running_stats = false;
        o.tape = sig ? &t : nullptr;
        Tensor5 lg = forward_network(g, params, input, o);
        const double loss = softmax_cross_entropy(lg, labels);
        if (sig) *sig = t.signature();
        return loss;
    };

    // A central difference of the loss cannot resolve gradients below the
    // round-off of the two evaluations. Components whose analytic and
    // numeric values both sit under that floor (e.g. a conv bias feeding a
    // batchnorm, whose true gradient is exactly zero) agree by definition.
    const double eps = std::numeric_limits<double>::epsilon();
    const double noise_floor =
        16.0 * eps * std::max(1.0, std::fabs(tape.loss_value)) / (2.0 * step);

    FiniteDiffReport report;
    for (const auto& [key, i] : chosen) {
        Tensor5& t = params.at(key);
        const double saved = t[i];

        BranchSignature sig_plus, sig_minus;
        t[i] = saved + step;
        const double loss_plus = eval_loss(&sig_plus);
        t[i] = saved - step;
        const double loss_minus = eval_loss(&sig_minus);
        t[i] = saved;

        FiniteDiffEntry entry;
        entry.param = key;
        entry.flat_index = i;
        auto git = grads.grads.find(key);
        entry.analytic = (git != grads.grads.end()) ? git->second[i] : 0.0;
        entry.numeric = (loss_plus - loss_minus) / (2.0 * step);
        entry.excluded = !(sig_plus == base_sig) || !(sig_minus == base_sig);
        if (!entry.excluded) {
            if (std::fabs(entry.analytic) <= noise_floor && std::fabs(entry.numeric) <= noise_floor) {
                entry.rel_error = 0.0;
            } else {
                const double denom =
                    std::max({std::fabs(entry.analytic), std::fabs(entry.numeric), 1e-8});
                entry.rel_error = std::fabs(entry.analytic - entry.numeric) / denom;
            }
            report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
            ++report.checked;
        } else {
            ++report.excluded;
        }
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.checked > 0 && report.max_rel_error <= tolerance;
    return report;
}

}  // namespace stsm
