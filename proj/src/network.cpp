#include "stsm/network.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stsm/rng.hpp"
#include "stsm/tensor_io.hpp"

namespace stsm {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::global_avgpool2d: return "gavgpool2d";
        case LayerKind::temporal_avgpool: return "tavgpool";
        case LayerKind::linear: return "linear";
        case LayerKind::stsm: return "stsm";
        case LayerKind::residual_block: return "block";
    }
    return "?";
}

NetworkConfig preset_config(const std::string& name) {
    NetworkConfig cfg;
    cfg.preset = name;
    if (name == "micro") {
        cfg.base_channels = 8;
        cfg.stage_blocks = {1};
        cfg.stem_kernel = 3;
        cfg.stem_stride = 1;
        cfg.stem_pool = false;
    } else if (name == "tiny") {
        cfg.base_channels = 16;
        cfg.stage_blocks = {2, 2};
    } else if (name == "small") {
        cfg.base_channels = 32;
        cfg.stage_blocks = {2, 2, 2};
    } else if (name == "wide") {
        cfg.base_channels = 48;
        cfg.stage_blocks = {2, 2};
    } else if (name == "deep") {
        cfg.base_channels = 16;
        cfg.stage_blocks = {2, 2, 2, 2};
    } else if (name == "bottleneck") {
        cfg.base_channels = 64;
        cfg.stage_blocks = {3, 4, 6, 3};
        cfg.block = BlockType::bottleneck;
        cfg.stem_kernel = 7;
        cfg.in_channels = 3;
        cfg.num_classes = 400;
    } else {
        throw ConfigError("unknown network preset '" + name + "'");
    }
    return cfg;
}

std::vector<std::string> preset_names() {
    return {"micro", "tiny", "small", "wide", "deep", "bottleneck"};
}

Tensor5& ParamStore::at(const std::string& key) {
    auto it = tensors.find(key);
    if (it == tensors.end()) throw ContractError("missing parameter '" + key + "'");
    return it->second;
}

const Tensor5& ParamStore::at(const std::string& key) const {
    auto it = tensors.find(key);
    if (it == tensors.end()) throw ContractError("missing parameter '" + key + "'");
    return it->second;
}

index_t ParamStore::total_parameters() const {
    index_t total = 0;
    for (const auto& [key, t] : tensors) total += t.size();
    return total;
}

namespace {

LayerSpec make_conv(const std::string& name, index_t in_ch, index_t out_ch, index_t k,
                    index_t stride, index_t pad) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.name = name;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = k;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec make_bn(const std::string& name, index_t ch) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    s.name = name;
    s.in_channels = s.out_channels = ch;
    return s;
}

LayerSpec make_plain(LayerKind kind, const std::string& name, index_t ch) {
    LayerSpec s;
    s.kind = kind;
    s.name = name;
    s.in_channels = s.out_channels = ch;
    return s;
}

LayerSpec make_shift(const std::string& name, index_t ch, const ShiftPattern& p) {
    LayerSpec s;
    s.kind = LayerKind::stsm;
    s.name = name;
    s.in_channels = s.out_channels = ch;
    s.shift = build_shift_spec(ch, p);
    return s;
}

LayerSpec make_basic_block(const std::string& name, index_t in_ch, index_t out_ch, index_t stride,
                           const ShiftPattern& shift) {
    LayerSpec b;
    b.kind = LayerKind::residual_block;
    b.name = name;
    b.in_channels = in_ch;
    b.out_channels = out_ch;
    if (!shift.none()) b.inner.push_back(make_shift(name + ".shift", in_ch, shift));
    b.inner.push_back(make_conv(name + ".conv1", in_ch, out_ch, 3, stride, 1));
    b.inner.push_back(make_bn(name + ".bn1", out_ch));
    b.inner.push_back(make_plain(LayerKind::relu, name + ".relu1", out_ch));
    b.inner.push_back(make_conv(name + ".conv2", out_ch, out_ch, 3, 1, 1));
    b.inner.push_back(make_bn(name + ".bn2", out_ch));
    if (in_ch != out_ch || stride != 1) {
        b.projection = {make_conv(name + ".proj", in_ch, out_ch, 1, stride, 0)};
    }
    return b;
}

LayerSpec make_bottleneck_block(const std::string& name, index_t in_ch, index_t mid_ch,
                                index_t out_ch, index_t stride, const ShiftPattern& shift) {
    LayerSpec b;
    b.kind = LayerKind::residual_block;
    b.name = name;
    b.in_channels = in_ch;
    b.out_channels = out_ch;
    if (!shift.none()) b.inner.push_back(make_shift(name + ".shift", in_ch, shift));
    b.inner.push_back(make_conv(name + ".conv1", in_ch, mid_ch, 1, 1, 0));
    b.inner.push_back(make_bn(name + ".bn1", mid_ch));
    b.inner.push_back(make_plain(LayerKind::relu, name + ".relu1", mid_ch));
    b.inner.push_back(make_conv(name + ".conv2", mid_ch, mid_ch, 3, stride, 1));
    b.inner.push_back(make_bn(name + ".bn2", mid_ch));
    b.inner.push_back(make_plain(LayerKind::relu, name + ".relu2", mid_ch));
    b.inner.push_back(make_conv(name + ".conv3", mid_ch, out_ch, 1, 1, 0));
    b.inner.push_back(make_bn(name + ".bn3", out_ch));
    if (in_ch != out_ch || stride != 1) {
        b.projection = {make_conv(name + ".proj", in_ch, out_ch, 1, stride, 0)};
    }
    return b;
}

}  // namespace

LayerGraph build_network(const NetworkConfig& cfg) {
    if (cfg.in_channels < 1 || cfg.num_classes < 1 || cfg.base_channels < 1) {
        throw ConfigError("network config requires positive channel and class counts");
    }
    if (cfg.stem_kernel != 1 && cfg.stem_kernel != 3 && cfg.stem_kernel != 7) {
        throw ConfigError("conv kernel must be one of {1,3,7}");
    }
    if (cfg.stem_stride != 1 && cfg.stem_stride != 2) {
        throw ConfigError("conv stride must be 1 or 2");
    }

    LayerGraph g;
    g.cfg = cfg;

    const index_t base = cfg.base_channels;
    g.layers.push_back(
        make_conv("stem.conv", cfg.in_channels, base, cfg.stem_kernel, cfg.stem_stride, cfg.stem_kernel / 2));
    g.layers.push_back(make_bn("stem.bn", base));
    g.layers.push_back(make_plain(LayerKind::relu, "stem.relu", base));
    if (cfg.stem_pool) {
        LayerSpec pool = make_plain(LayerKind::maxpool2d, "stem.pool", base);
        pool.kernel = 3;
        pool.stride = 2;
        g.layers.push_back(pool);
    }

    const index_t expansion = (cfg.block == BlockType::bottleneck) ? 4 : 1;
    index_t ch = base;
    for (std::size_t stage = 0; stage < cfg.stage_blocks.size(); ++stage) {
        const int blocks = cfg.stage_blocks[stage];
        if (blocks < 0) throw ConfigError("negative block count in stage " + std::to_string(stage));
        const index_t mid = base << stage;
        const index_t out_ch = mid * expansion;
        for (int b = 0; b < blocks; ++b) {
            const index_t stride = (stage > 0 && b == 0) ? 2 : 1;
            const std::string name = "s" + std::to_string(stage) + ".b" + std::to_string(b);
            LayerSpec block = (cfg.block == BlockType::bottleneck)
                                  ? make_bottleneck_block(name, ch, mid, out_ch, stride, cfg.shift)
                                  : make_basic_block(name, ch, out_ch, stride, cfg.shift);
            g.layers.push_back(std::move(block));
            g.layers.push_back(make_plain(LayerKind::relu, name + ".out_relu", out_ch));
            ch = out_ch;
        }
    }

    g.layers.push_back(make_plain(LayerKind::global_avgpool2d, "head.gap", ch));
    g.layers.push_back(make_plain(LayerKind::temporal_avgpool, "head.tap", ch));
    LayerSpec fc;
    fc.kind = LayerKind::linear;
    fc.name = "head.fc";
    fc.in_channels = ch;
    fc.out_channels = cfg.num_classes;
    g.layers.push_back(fc);
    return g;
}

namespace {

void init_layer_params(const LayerSpec& s, ParamStore& store, Rng& rng) {
    switch (s.kind) {
        case LayerKind::conv2d: {
            const index_t fan_in = s.in_channels * s.kernel * s.kernel;
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Tensor5 w(Dims5{s.out_channels, s.in_channels, s.kernel, s.kernel, 1}, 0.0);
            for (index_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
            store.tensors.emplace(s.name + ".weight", std::move(w));
            store.tensors.emplace(s.name + ".bias", Tensor5::zeros(Dims5{s.out_channels, 1, 1, 1, 1}));
            break;
        }
        case LayerKind::batchnorm: {
            store.tensors.emplace(s.name + ".weight", Tensor5::ones(Dims5{s.out_channels, 1, 1, 1, 1}));
            store.tensors.emplace(s.name + ".bias", Tensor5::zeros(Dims5{s.out_channels, 1, 1, 1, 1}));
            store.running.emplace(s.name + ".running_mean", Tensor5::zeros(Dims5{s.out_channels, 1, 1, 1, 1}));
            store.running.emplace(s.name + ".running_var", Tensor5::ones(Dims5{s.out_channels, 1, 1, 1, 1}));
            break;
        }
        case LayerKind::linear: {
            const double bound = std::sqrt(6.0 / static_cast<double>(s.in_channels));
            Tensor5 w(Dims5{s.out_channels, s.in_channels, 1, 1, 1}, 0.0);
            for (index_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
            store.tensors.emplace(s.name + ".weight", std::move(w));
            store.tensors.emplace(s.name + ".bias", Tensor5::zeros(Dims5{s.out_channels, 1, 1, 1, 1}));
            break;
        }
        case LayerKind::residual_block: {
            for (const LayerSpec& inner : s.inner) init_layer_params(inner, store, rng);
            if (s.projection) {
                for (const LayerSpec& p : *s.projection) init_layer_params(p, store, rng);
            }
            break;
        }
        default:
            break;  // relu / pools / stsm own no parameters
    }
}

}  // namespace

ParamStore init_params(const LayerGraph& g, std::uint64_t seed) {
    ParamStore store;
    Rng rng(Rng::derive(seed, 0xb00d));
    for (const LayerSpec& s : g.layers) init_layer_params(s, store, rng);
    return store;
}

// ---------------------------------------------------------------------------
// Forward execution with optional tape recording.
// ---------------------------------------------------------------------------

namespace {

struct ConvRecord final : OpRecord {
    std::string wkey, bkey;
    Tensor5 x, weight;
    index_t stride, pad;

    Tensor5 backward(const Tensor5& g, GradientSet& grads) const override {
        Tensor5& gw = grads.accumulate(wkey, weight.dims());
        Tensor5& gb = grads.accumulate(bkey, Dims5{weight.dims().n, 1, 1, 1, 1});
        return conv2d_backward(g, x, weight, stride, pad, gw, gb);
    }
};

struct BatchNormRecord final : OpRecord {
    std::string gkey, bkey;
    Tensor5 x, gamma;
    BatchNormSaved saved;
    bool training = true;

    Tensor5 backward(const Tensor5& g, GradientSet& grads) const override {
        Tensor5& gg = grads.accumulate(gkey, gamma.dims());
        Tensor5& gb = grads.accumulate(bkey, gamma.dims());
        if (training) {
            return batchnorm_train_backward(g, x, gamma, saved, gg, gb);
        }
        // Eval mode: the statistics are constants.
        const Dims5 d = x.dims();
        Tensor5 dx(d, 0.0);
        for (index_t c = 0; c < d.c; ++c) {
            const double inv_std = saved.inv_std[static_cast<std::size_t>(c)];
            const double mean = saved.mean[static_cast<std::size_t>(c)];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (index_t n = 0; n < d.n; ++n) {
                const double* gp = g.data() + g.offset(n, c, 0, 0, 0);
                const double* xp = x.data() + x.offset(n, c, 0, 0, 0);
                double* dp = dx.data() + dx.offset(n, c, 0, 0, 0);
                for (index_t i = 0; i < d.t * d.h * d.w; ++i) {
                    sum_dy += gp[i];
                    sum_dy_xhat += gp[i] * (xp[i] - mean) * inv_std;
                    dp[i] = gp[i] * gamma[c] * inv_std;
                }
            }
            gb[c] += sum_dy;
            gg[c] += sum_dy_xhat;
        }
        return dx;
    }
};

struct ReluRecord final : OpRecord {
    std::vector<std::uint8_t> mask;  // 1 where input > 0
    Dims5 dims;
    bool saw_exact_zero = false;

    Tensor5 backward(const Tensor5& g, GradientSet&) const override {
        Tensor5 dx = g;
        double* p = dx.data();
        for (index_t i = 0; i < dx.size(); ++i) {
            if (!mask[static_cast<std::size_t>(i)]) p[i] = 0.0;
        }
        return dx;
    }

    void append_signature(BranchSignature& sig) const override { sig.relu_masks.push_back(mask); }
};

struct MaxPoolRecord final : OpRecord {
    std::vector<index_t> argmax;
    Dims5 in_dims;

    Tensor5 backward(const Tensor5& g, GradientSet&) const override {
        return maxpool2d_backward(g, in_dims, argmax);
    }

    void append_signature(BranchSignature& sig) const override { sig.pool_argmax.push_back(argmax); }
};

struct GlobalAvgRecord final : OpRecord {
    Dims5 in_dims;
    Tensor5 backward(const Tensor5& g, GradientSet&) const override {
        return global_avgpool2d_backward(g, in_dims);
    }
};

struct TemporalAvgRecord final : OpRecord {
    Dims5 in_dims;
    Tensor5 backward(const Tensor5& g, GradientSet&) const override {
        return temporal_avgpool_backward(g, in_dims);
    }
};

struct LinearRecord final : OpRecord {
    std::string wkey, bkey;
    Tensor5 x, weight;

    Tensor5 backward(const Tensor5& g, GradientSet& grads) const override {
        Tensor5& gw = grads.accumulate(wkey, weight.dims());
        Tensor5& gb = grads.accumulate(bkey, Dims5{weight.dims().n, 1, 1, 1, 1});
        return linear_backward(g, x, weight, gw, gb);
    }
};

struct ShiftRecord final : OpRecord {
    ShiftSpec adjoint;

    Tensor5 backward(const Tensor5& g, GradientSet&) const override {
        return apply_stsm(g, adjoint);
    }
};

struct ResidualRecord final : OpRecord {
    std::vector<std::unique_ptr<OpRecord>> inner;
    std::vector<std::unique_ptr<OpRecord>> projection;

    Tensor5 backward(const Tensor5& g, GradientSet& grads) const override {
        Tensor5 gi = g;
        for (auto it = inner.rbegin(); it != inner.rend(); ++it) {
            gi = (*it)->backward(gi, grads);
        }
        Tensor5 gs = g;
        for (auto it = projection.rbegin(); it != projection.rend(); ++it) {
            gs = (*it)->backward(gs, grads);
        }
        return elementwise(gi, gs, EwOp::add);
    }

    void append_signature(BranchSignature& sig) const override {
        for (const auto& op : inner) op->append_signature(sig);
        for (const auto& op : projection) op->append_signature(sig);
    }
};

using RecordSink = std::vector<std::unique_ptr<OpRecord>>;

Tensor5 run_layer(const LayerSpec& s, ParamStore& params, const Tensor5& x,
                  const ForwardOptions& opts, RecordSink* sink);

Tensor5 run_chain(const std::vector<LayerSpec>& layers, ParamStore& params, Tensor5 x,
                  const ForwardOptions& opts, RecordSink* sink) {
    for (const LayerSpec& s : layers) x = run_layer(s, params, x, opts, sink);
    return x;
}

Tensor5 run_layer(const LayerSpec& s, ParamStore& params, const Tensor5& x,
                  const ForwardOptions& opts, RecordSink* sink) {
    switch (s.kind) {
        case LayerKind::conv2d: {
            const Tensor5& w = params.at(s.name + ".weight");
            const Tensor5& b = params.at(s.name + ".bias");
            Tensor5 y = conv2d_forward(x, w, b, s.stride, s.pad);
            if (sink) {
                auto rec = std::make_unique<ConvRecord>();
                rec->wkey = s.name + ".weight";
                rec->bkey = s.name + ".bias";
                rec->x = x;
                rec->weight = w;
                rec->stride = s.stride;
                rec->pad = s.pad;
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::batchnorm: {
            const Tensor5& gamma = params.at(s.name + ".weight");
            const Tensor5& beta = params.at(s.name + ".bias");
            if (opts.training) {
                BatchNormSaved saved;
                Tensor5 y = batchnorm_train_forward(x, gamma, beta, s.eps, saved);
                if (opts.update_running_stats) {
                    batchnorm_update_running(x, saved, s.momentum,
                                             params.running.at(s.name + ".running_mean"),
                                             params.running.at(s.name + ".running_var"));
                }
                if (sink) {
                    auto rec = std::make_unique<BatchNormRecord>();
                    rec->gkey = s.name + ".weight";
                    rec->bkey = s.name + ".bias";
                    rec->x = x;
                    rec->gamma = gamma;
                    rec->saved = std::move(saved);
                    rec->training = true;
                    sink->push_back(std::move(rec));
                }
                return y;
            }
            const Tensor5& rm = params.running.at(s.name + ".running_mean");
            const Tensor5& rv = params.running.at(s.name + ".running_var");
            Tensor5 y = batchnorm_eval_forward(x, gamma, beta, rm, rv, s.eps);
            if (sink) {
                auto rec = std::make_unique<BatchNormRecord>();
                rec->gkey = s.name + ".weight";
                rec->bkey = s.name + ".bias";
                rec->x = x;
                rec->gamma = gamma;
                rec->training = false;
                rec->saved.mean.resize(static_cast<std::size_t>(x.dims().c));
                rec->saved.inv_std.resize(static_cast<std::size_t>(x.dims().c));
                for (index_t c = 0; c < x.dims().c; ++c) {
                    rec->saved.mean[static_cast<std::size_t>(c)] = rm[c];
                    rec->saved.inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(rv[c] + s.eps);
                }
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::relu: {
            Tensor5 y = relu_forward(x);
            if (sink) {
                auto rec = std::make_unique<ReluRecord>();
                rec->dims = x.dims();
                rec->mask.resize(static_cast<std::size_t>(x.size()));
                for (index_t i = 0; i < x.size(); ++i) {
                    rec->mask[static_cast<std::size_t>(i)] = x[i] > 0.0 ? 1 : 0;
                    if (x[i] == 0.0) rec->saw_exact_zero = true;
                }
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::maxpool2d: {
            std::vector<index_t> argmax;
            Tensor5 y = maxpool2d_forward(x, s.kernel, s.stride, argmax);
            if (sink) {
                auto rec = std::make_unique<MaxPoolRecord>();
                rec->in_dims = x.dims();
                rec->argmax = std::move(argmax);
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::global_avgpool2d: {
            Tensor5 y = global_avgpool2d_forward(x);
            if (sink) {
                auto rec = std::make_unique<GlobalAvgRecord>();
                rec->in_dims = x.dims();
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::temporal_avgpool: {
            Tensor5 y = temporal_avgpool_forward(x);
            if (sink) {
                auto rec = std::make_unique<TemporalAvgRecord>();
                rec->in_dims = x.dims();
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::linear: {
            const Tensor5& w = params.at(s.name + ".weight");
            const Tensor5& b = params.at(s.name + ".bias");
            Tensor5 y = linear_forward(x, w, b);
            if (sink) {
                auto rec = std::make_unique<LinearRecord>();
                rec->wkey = s.name + ".weight";
                rec->bkey = s.name + ".bias";
                rec->x = x;
                rec->weight = w;
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::stsm: {
            Tensor5 y = apply_stsm(x, s.shift);
            if (sink) {
                auto rec = std::make_unique<ShiftRecord>();
                rec->adjoint = shift_adjoint(s.shift);
                sink->push_back(std::move(rec));
            }
            return y;
        }
        case LayerKind::residual_block: {
            RecordSink inner_sink;
            RecordSink proj_sink;
            Tensor5 branch = run_chain(s.inner, params, x, opts, sink ? &inner_sink : nullptr);
            Tensor5 skip = x;
            if (s.projection) {
                skip = run_chain(*s.projection, params, skip, opts, sink ? &proj_sink : nullptr);
            }
            if (!(branch.dims() == skip.dims())) {
                throw ShapeError("residual addition shape mismatch in '" + s.name + "': " +
                                 branch.dims().str() + " vs " + skip.dims().str());
            }
            Tensor5 y = elementwise(branch, skip, EwOp::add);
            if (sink) {
                auto rec = std::make_unique<ResidualRecord>();
                rec->inner = std::move(inner_sink);
                rec->projection = std::move(proj_sink);
                sink->push_back(std::move(rec));
            }
            return y;
        }
    }
    throw ContractError("unhandled layer kind");
}

}  // namespace

Tensor5 forward_network(const LayerGraph& g, ParamStore& params, const Tensor5& x,
                        const ForwardOptions& opts) {
    if (x.dims().c != g.cfg.in_channels) {
        throw ShapeError("network expects " + std::to_string(g.cfg.in_channels) +
                         " input channels, got " + std::to_string(x.dims().c));
    }
    RecordSink sink;
    Tensor5 y = run_chain(g.layers, params, x, opts, opts.tape ? &sink : nullptr);
    if (opts.tape) {
        for (auto& op : sink) opts.tape->ops.push_back(std::move(op));
    }
    return y;
}

std::vector<int> predict(const LayerGraph& g, ParamStore& params, const Tensor5& x) {
    Tensor5 logits = forward_network(g, params, x);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(logits.dims().n));
    for (index_t n = 0; n < logits.dims().n; ++n) {
        int best = 0;
        double best_v = logits.at(n, 0, 0, 0, 0);
        for (index_t c = 1; c < logits.dims().c; ++c) {
            const double v = logits.at(n, c, 0, 0, 0);
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(c);
            }
        }
        out.push_back(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cost accounting.
// ---------------------------------------------------------------------------

namespace {

Dims5 cost_layer(const LayerSpec& s, Dims5 in, std::vector<LayerCost>& rows);

Dims5 cost_chain(const std::vector<LayerSpec>& layers, Dims5 in, std::vector<LayerCost>& rows) {
    for (const LayerSpec& s : layers) in = cost_layer(s, in, rows);
    return in;
}

Dims5 cost_layer(const LayerSpec& s, Dims5 in, std::vector<LayerCost>& rows) {
    LayerCost row;
    row.name = s.name;
    row.kind = layer_kind_name(s.kind);
    Dims5 out = in;
    switch (s.kind) {
        case LayerKind::conv2d: {
            if (in.c != s.in_channels) {
                throw ShapeError("cost: conv '" + s.name + "' expects C=" +
                                 std::to_string(s.in_channels) + ", got " + std::to_string(in.c));
            }
            out.c = s.out_channels;
            out.h = conv_out_extent(in.h, s.kernel, s.stride, s.pad);
            out.w = conv_out_extent(in.w, s.kernel, s.stride, s.pad);
            if (out.h < 1 || out.w < 1) {
                throw ShapeError("cost: conv '" + s.name + "' output empty for input " + in.str());
            }
            row.mults_adds = static_cast<long long>(in.n) * in.t * out.h * out.w * s.out_channels *
                             s.in_channels * s.kernel * s.kernel;
            row.parameters =
                static_cast<long long>(s.out_channels) * s.in_channels * s.kernel * s.kernel +
                s.out_channels;
            break;
        }
        case LayerKind::batchnorm:
            row.parameters = 2LL * s.out_channels;
            break;
        case LayerKind::maxpool2d: {
            if (in.h < s.kernel || in.w < s.kernel) {
                throw ShapeError("cost: pool '" + s.name + "' window exceeds input " + in.str());
            }
            out.h = (in.h - s.kernel) / s.stride + 1;
            out.w = (in.w - s.kernel) / s.stride + 1;
            break;
        }
        case LayerKind::global_avgpool2d:
            out.h = out.w = 1;
            break;
        case LayerKind::temporal_avgpool:
            out.t = 1;
            break;
        case LayerKind::linear: {
            if (in.c != s.in_channels || in.t != 1 || in.h != 1 || in.w != 1) {
                throw ShapeError("cost: linear '" + s.name + "' expects (N," +
                                 std::to_string(s.in_channels) + ",1,1,1), got " + in.str());
            }
            out.c = s.out_channels;
            row.mults_adds = static_cast<long long>(in.n) * s.in_channels * s.out_channels;
            row.parameters = static_cast<long long>(s.in_channels) * s.out_channels + s.out_channels;
            break;
        }
        case LayerKind::stsm: {
            if (in.c != s.in_channels) {
                throw ShapeError("cost: shift '" + s.name + "' expects C=" +
                                 std::to_string(s.in_channels) + ", got " + std::to_string(in.c));
            }
            // Shift layers move data; they hold no parameters and perform no
            // multiply-adds.
            break;
        }
        case LayerKind::relu:
            break;
        case LayerKind::residual_block: {
            Dims5 branch = cost_chain(s.inner, in, rows);
            Dims5 skip = in;
            if (s.projection) skip = cost_chain(*s.projection, in, rows);
            if (!(branch == skip)) {
                throw ShapeError("cost: residual '" + s.name + "' addition mismatch " +
                                 branch.str() + " vs " + skip.str());
            }
            return branch;  // container itself contributes no row
        }
    }
    rows.push_back(row);
    return out;
}

}  // namespace

CostReport cost_report(const LayerGraph& g, Dims5 input_dims) {
    if (input_dims.c != g.cfg.in_channels) {
        throw ShapeError("cost: network expects C=" + std::to_string(g.cfg.in_channels) +
                         ", input has C=" + std::to_string(input_dims.c));
    }
    CostReport report;
    cost_chain(g.layers, input_dims, report.rows);
    for (const LayerCost& row : report.rows) {
        report.total_mults_adds += row.mults_adds;
        report.total_parameters += row.parameters;
    }
    return report;
}

std::string CostReport::to_text() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %-12s %16s %12s\n", "layer", "kind", "mults_adds", "params");
    os << buf;
    for (const LayerCost& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %-12s %16lld %12lld\n", row.name.c_str(),
                      row.kind.c_str(), row.mults_adds, row.parameters);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-28s %-12s %16lld %12lld\n", "TOTAL", "", total_mults_adds,
                  total_parameters);
    os << buf;
    return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

void manifest_layer(const LayerSpec& s, std::ostringstream& os) {
    switch (s.kind) {
        case LayerKind::conv2d:
            os << "layer " << s.name << " conv2d in=" << s.in_channels << " out=" << s.out_channels
               << " k=" << s.kernel << " stride=" << s.stride << " pad=" << s.pad << "\n";
            break;
        case LayerKind::batchnorm: {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", s.eps);
            os << "layer " << s.name << " batchnorm channels=" << s.out_channels << " eps=" << buf;
            std::snprintf(buf, sizeof(buf), "%.17g", s.momentum);
            os << " momentum=" << buf << "\n";
            break;
        }
        case LayerKind::maxpool2d:
            os << "layer " << s.name << " maxpool2d k=" << s.kernel << " stride=" << s.stride << "\n";
            break;
        case LayerKind::linear:
            os << "layer " << s.name << " linear in=" << s.in_channels << " out=" << s.out_channels
               << "\n";
            break;
        case LayerKind::stsm:
            os << "layer " << s.name << " stsm spec=\"" << format_shift_spec(s.shift)
               << "\" channels=" << s.in_channels << "\n";
            break;
        case LayerKind::residual_block:
            os << "block " << s.name << "\n";
            for (const LayerSpec& inner : s.inner) manifest_layer(inner, os);
            if (s.projection) {
                os << "projection " << s.name << "\n";
                for (const LayerSpec& p : *s.projection) manifest_layer(p, os);
            }
            os << "endblock " << s.name << "\n";
            break;
        default:
            os << "layer " << s.name << " " << layer_kind_name(s.kind) << "\n";
            break;
    }
}

}  // namespace

std::string network_manifest(const LayerGraph& g) {
    std::ostringstream os;
    os << "checkpoint-format 1\n";
    os << "preset " << g.cfg.preset << "\n";
    os << "in_channels " << g.cfg.in_channels << "\n";
    os << "num_classes " << g.cfg.num_classes << "\n";
    for (const LayerSpec& s : g.layers) manifest_layer(s, os);
    return os.str();
}

void save_checkpoint(const LayerGraph& g, const ParamStore& params,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
    manifest << network_manifest(g);
    manifest.close();
    for (const auto& [key, t] : params.tensors) save_tensor(t, dir / (key + ".t5"));
    for (const auto& [key, t] : params.running) save_tensor(t, dir / (key + ".t5"));
}

void load_checkpoint(const LayerGraph& g, ParamStore& params, const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) throw FormatError("missing manifest in " + dir.string());
    std::stringstream buf;
    buf << is.rdbuf();
    if (buf.str() != network_manifest(g)) {
        throw FormatError("checkpoint manifest does not match the network it is loaded into");
    }
    for (auto& [key, t] : params.tensors) {
        Tensor5 loaded = load_tensor(dir / (key + ".t5"));
        if (!(loaded.dims() == t.dims())) {
            throw FormatError("checkpoint tensor '" + key + "' has dims " + loaded.dims().str() +
                              ", expected " + t.dims().str());
        }
        t = std::move(loaded);
    }
    for (auto& [key, t] : params.running) {
        Tensor5 loaded = load_tensor(dir / (key + ".t5"));
        if (!(loaded.dims() == t.dims())) {
            throw FormatError("checkpoint tensor '" + key + "' has dims " + loaded.dims().str() +
                              ", expected " + t.dims().str());
        }
        t = std::move(loaded);
    }
}

}  // namespace stsm
