#pragma once

#include <filesystem>
#include <vector>

#include "stsm/tensor.hpp"

namespace stsm {

// Four motion classes: a bright square translating one pixel per frame.
// Every rightward clip is emitted together with a leftward clip that is its
// exact time reversal (and likewise down/up), so a model with no temporal
// interaction beyond averaging provably cannot tell the pair members apart.
enum class Motion : int { right = 0, left = 1, down = 2, up = 3 };
constexpr int kMotionClasses = 4;

struct MotionTask {
    index_t frames = 8;
    index_t height = 32;
    index_t width = 32;
    index_t square = 5;
    double noise = 0.05;  // square brightness is (1 - noise) + U(0, noise)
    index_t channels = 1;
};

struct ClipSample {
    Tensor5 clip;  // (1, C, T, H, W), values in [0, 1]
    int label = 0;
    std::uint64_t seed = 0;
};

// n must be a positive multiple of 4; classes come out exactly balanced and
// reversal partners adjacent (right at 2k, its left partner at 2k+1, then a
// down/up pair, repeating). Deterministic for a given seed.
std::vector<ClipSample> generate_batch(const MotionTask& task, int n, std::uint64_t seed);

// Clip fixture on disk: tensor file at `path`, label sidecar at
// `path + ".label"` containing a single `label=<int>` line.
void save_clip_file(const ClipSample& sample, const std::filesystem::path& path);
ClipSample load_clip_file(const std::filesystem::path& path);

// Stacks single-clip samples into one (n, C, T, H, W) batch tensor.
Tensor5 stack_clips(const std::vector<ClipSample>& samples);
std::vector<int> labels_of(const std::vector<ClipSample>& samples);

}  // namespace stsm
