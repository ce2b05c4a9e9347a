#pragma once

#include <array>
#include <string>
#include <vector>

#include "stsm/fraction.hpp"
#include "stsm/tensor.hpp"

namespace stsm {

// Half-open channel interval [start, end).
struct ChannelRange {
    index_t start = 0;
    index_t end = 0;
    index_t size() const { return end - start; }
    bool operator==(const ChannelRange&) const = default;
};

// Non-empty subset of the shiftable axes {T, H, W}.
struct AxisSet {
    bool t = false, h = false, w = false;

    bool empty() const { return !t && !h && !w; }
    bool operator==(const AxisSet&) const = default;
    std::string str() const;  // e.g. "T", "HW"
};

// Unit displacement applied to every axis in the set. direction +1 moves
// content toward increasing index, -1 toward decreasing index.
struct ShiftGroup {
    AxisSet axes;
    int direction = 1;
    bool operator==(const ShiftGroup&) const = default;
};

// Channel-partitioned shift layout: each axis-set in `pattern` owns two
// equal-size channel ranges (forward first, then backward), laid out from
// channel 0 in pattern order; remaining channels form the identity range.
// Per-direction group size is floor(C * f / (2 * |pattern|)).
struct ShiftSpec {
    std::vector<AxisSet> pattern;
    Fraction shifted_fraction{0, 1};
    index_t channels = 0;

    struct Entry {
        ChannelRange range;
        ShiftGroup group;
        bool operator==(const Entry&) const = default;
    };
    std::vector<Entry> layout;
    ChannelRange identity;

    index_t group_size() const;  // channels per direction per axis-set
    bool operator==(const ShiftSpec&) const = default;
};

// Parsed but not yet sized: the textual form carries no channel count.
struct ShiftPattern {
    std::vector<AxisSet> groups;
    Fraction shifted_fraction{0, 1};
    bool none() const { return groups.empty(); }
};

ShiftSpec build_shift_spec(index_t channels, const std::vector<AxisSet>& pattern, Fraction f);
ShiftSpec build_shift_spec(index_t channels, const ShiftPattern& pattern);

// Text forms mirror the CLI: "pattern=T+H+W f=3/8". Axis letters within a
// group are juxtaposed ("TH", "HW"); groups are joined with '+'. The empty
// pattern is written "pattern=none f=0" and yields a pure identity spec.
ShiftPattern parse_shift_pattern(const std::string& text);
std::vector<AxisSet> parse_pattern_groups(const std::string& text);
std::string format_shift_pattern(const ShiftPattern& p);
std::string format_shift_spec(const ShiftSpec& s);

// Opposite-direction layout; the backward operator of apply_stsm.
ShiftSpec shift_adjoint(const ShiftSpec& s);

// Unit shift of the channels in `range` along `axes` with zero fill; all
// other channels are copied unchanged.
Tensor5 shift_along_axes(const Tensor5& x, const AxisSet& axes, int offset, ChannelRange range);

// The full channel-partitioned shift described by the spec.
Tensor5 apply_stsm(const Tensor5& x, const ShiftSpec& spec);

// Same operation performed in place by moving contiguous slabs (memmove)
// instead of allocating a fresh tensor. Used by the microbenchmark.
void apply_stsm_in_place(Tensor5& x, const ShiftSpec& spec);

// Per-channel one-hot 3x3x3 kernel over (T,H,W) offsets; identity channels
// carry the center tap. Exactly one entry per channel equals 1.
struct SparseKernel {
    index_t channels = 0;
    std::vector<std::array<double, 27>> taps;  // index = (kt*3 + kh)*3 + kw

    static int tap_index(int kt, int kh, int kw) { return (kt * 3 + kh) * 3 + kw; }
};

SparseKernel build_sparse_kernel(const ShiftSpec& spec);

// Reference route: textbook depthwise convolution with zero same-padding,
// out(t,h,w) = sum_k kernel[kt][kh][kw] * x(t+kt-1, h+kh-1, w+kw-1).
// Deliberately a direct nested loop sharing no code with apply_stsm.
Tensor5 oracle_sparse_conv(const Tensor5& x, const SparseKernel& k);

}  // namespace stsm
