#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stsm/layers.hpp"
#include "stsm/shift.hpp"
#include "stsm/tape.hpp"
#include "stsm/tensor.hpp"

namespace stsm {

enum class LayerKind {
    conv2d,
    batchnorm,
    relu,
    maxpool2d,
    global_avgpool2d,
    temporal_avgpool,
    linear,
    stsm,
    residual_block,
};

std::string layer_kind_name(LayerKind k);

// Declarative layer description with resolved channel counts. Residual
// blocks nest their inner chain and optional 1x1 projection.
struct LayerSpec {
    LayerKind kind;
    std::string name;
    index_t in_channels = 0;
    index_t out_channels = 0;

    // conv2d / maxpool2d
    index_t kernel = 0;
    index_t stride = 1;
    index_t pad = 0;

    // batchnorm
    double eps = 1e-5;
    double momentum = 0.1;

    // stsm
    ShiftSpec shift;

    // residual_block
    std::vector<LayerSpec> inner;
    std::optional<std::vector<LayerSpec>> projection;  // layers on the skip path
};

enum class BlockType { basic, bottleneck };

struct NetworkConfig {
    std::string preset = "custom";
    int in_channels = 1;
    int num_classes = 4;
    int base_channels = 16;
    std::vector<int> stage_blocks = {2, 2};
    BlockType block = BlockType::basic;
    int stem_kernel = 3;
    int stem_stride = 2;
    bool stem_pool = true;  // 3x3 stride-2 max pool after the stem
    ShiftPattern shift;     // empty pattern => no shift layers inserted
};

// Named configurations; throws ConfigError for unknown names.
NetworkConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Parameters plus non-learnable state. Learnable entries live in `tensors`
// (shift layers never get one); running statistics and optimizer momentum
// are kept apart so parameter counts and gradients cover exactly the
// learnable set.
struct ParamStore {
    std::map<std::string, Tensor5> tensors;
    std::map<std::string, Tensor5> running;
    std::map<std::string, Tensor5> momentum;

    Tensor5& at(const std::string& key);
    const Tensor5& at(const std::string& key) const;
    index_t total_parameters() const;
};

struct LayerGraph {
    NetworkConfig cfg;
    std::vector<LayerSpec> layers;
};

// Stem -> (optional pool) -> residual stages, each block led by a shift
// layer -> global spatial average -> temporal average -> classifier.
LayerGraph build_network(const NetworkConfig& cfg);

// Fan-in scaled uniform init for conv/linear weights, unit scale and zero
// bias for batchnorm; deterministic for a given seed.
ParamStore init_params(const LayerGraph& g, std::uint64_t seed);

struct ForwardOptions {
    bool training = false;             // batch statistics instead of running stats
    bool update_running_stats = false; // only honored when training
    Tape* tape = nullptr;
};

Tensor5 forward_network(const LayerGraph& g, ParamStore& params, const Tensor5& x,
                        const ForwardOptions& opts = {});

// argmax over classes per sample; ties resolve to the lowest class id.
std::vector<int> predict(const LayerGraph& g, ParamStore& params, const Tensor5& x);

// Multiply-add and parameter accounting. Convolutions and linear layers
// carry all the multiply-adds; normalization, activations, pooling, and
// shift layers count zero. Shift layers also hold zero parameters.
struct LayerCost {
    std::string name;
    std::string kind;
    long long mults_adds = 0;
    long long parameters = 0;
};

struct CostReport {
    std::vector<LayerCost> rows;
    long long total_mults_adds = 0;
    long long total_parameters = 0;

    std::string to_text() const;
};

CostReport cost_report(const LayerGraph& g, Dims5 input_dims);

// Checkpoint: one tensor file per parameter / running statistic plus a
// manifest describing every layer. Loading verifies the manifest matches
// the graph it is loaded into.
void save_checkpoint(const LayerGraph& g, const ParamStore& params, const std::filesystem::path& dir);
void load_checkpoint(const LayerGraph& g, ParamStore& params, const std::filesystem::path& dir);

std::string network_manifest(const LayerGraph& g);

}  // namespace stsm
