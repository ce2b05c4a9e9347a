#include "stsm/shift.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace stsm {

std::string AxisSet::str() const {
    std::string s;
    if (t) s += 'T';
    if (h) s += 'H';
    if (w) s += 'W';
    return s;
}

index_t ShiftSpec::group_size() const {
    return layout.empty() ? 0 : layout.front().range.size();
}

ShiftSpec build_shift_spec(index_t channels, const std::vector<AxisSet>& pattern, Fraction f) {
    if (f.num < 0 || f.num > f.den) {
        throw ConfigError("shifted fraction must lie in [0,1], got " + f.str());
    }
    const index_t m = static_cast<index_t>(pattern.size());
    for (const AxisSet& a : pattern) {
        if (a.empty()) throw ConfigError("empty axis-set in shift pattern");
    }
    if (m > 0 && channels < 2 * m) {
        throw ConfigError("need at least " + std::to_string(2 * m) + " channels for " +
                          std::to_string(m) + " shift groups, got " + std::to_string(channels));
    }
    if (channels < 1) throw ConfigError("channel count must be >= 1");

    ShiftSpec spec;
    spec.pattern = pattern;
    spec.shifted_fraction = f;
    spec.channels = channels;

    // floor(C*f / (2m)) channels per direction; leftovers stay identity.
    // Degenerate (empty) ranges are omitted from the layout.
    const index_t g = (m == 0) ? 0 : (channels * f.num) / (f.den * 2 * m);
    index_t next = 0;
    if (g > 0) {
        for (const AxisSet& axes : pattern) {
            spec.layout.push_back({ChannelRange{next, next + g}, ShiftGroup{axes, +1}});
            next += g;
            spec.layout.push_back({ChannelRange{next, next + g}, ShiftGroup{axes, -1}});
            next += g;
        }
    }
    spec.identity = ChannelRange{next, channels};
    return spec;
}

ShiftSpec build_shift_spec(index_t channels, const ShiftPattern& pattern) {
    return build_shift_spec(channels, pattern.groups, pattern.shifted_fraction);
}

std::vector<AxisSet> parse_pattern_groups(const std::string& text) {
    if (text == "none" || text.empty()) return {};
    std::vector<AxisSet> groups;
    std::string token;
    std::istringstream is(text);
    while (std::getline(is, token, '+')) {
        AxisSet a;
        if (token.empty()) throw ConfigError("empty shift group in pattern '" + text + "'");
        for (char ch : token) {
            switch (ch) {
                case 'T': a.t = true; break;
                case 'H': a.h = true; break;
                case 'W': a.w = true; break;
                default:
                    throw ConfigError("unknown axis '" + std::string(1, ch) + "' in pattern token '" +
                                      token + "'");
            }
        }
        groups.push_back(a);
    }
    return groups;
}

ShiftPattern parse_shift_pattern(const std::string& text) {
    ShiftPattern p;
    bool have_pattern = false, have_f = false;
    std::istringstream is(text);
    std::string field;
    while (is >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key=value in shift spec, got '" + field + "'");
        }
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "pattern") {
            p.groups = parse_pattern_groups(value);
            have_pattern = true;
        } else if (key == "f") {
            p.shifted_fraction = Fraction::parse(value);
            have_f = true;
        } else {
            throw ConfigError("unknown shift spec key '" + key + "'");
        }
    }
    if (!have_pattern) throw ConfigError("shift spec missing 'pattern=' in '" + text + "'");
    if (!have_f) throw ConfigError("shift spec missing 'f=' in '" + text + "'");
    if (p.shifted_fraction.num < 0 || p.shifted_fraction.num > p.shifted_fraction.den) {
        throw ConfigError("shifted fraction must lie in [0,1], got " + p.shifted_fraction.str());
    }
    return p;
}

std::string format_shift_pattern(const ShiftPattern& p) {
    std::string s = "pattern=";
    if (p.groups.empty()) {
        s += "none";
    } else {
        for (std::size_t i = 0; i < p.groups.size(); ++i) {
            if (i) s += '+';
            s += p.groups[i].str();
        }
    }
    s += " f=" + p.shifted_fraction.str();
    return s;
}

std::string format_shift_spec(const ShiftSpec& s) {
    ShiftPattern p;
    p.groups = s.pattern;
    p.shifted_fraction = s.shifted_fraction;
    return format_shift_pattern(p);
}

ShiftSpec shift_adjoint(const ShiftSpec& s) {
    ShiftSpec out = s;
    for (auto& entry : out.layout) entry.group.direction = -entry.group.direction;
    return out;
}

namespace {

void check_range(const Tensor5& x, const ChannelRange& range) {
    if (range.start < 0 || range.start > range.end || range.end > x.dims().c) {
        throw ShapeError("channel range [" + std::to_string(range.start) + "," +
                         std::to_string(range.end) + ") invalid for C=" + std::to_string(x.dims().c));
    }
}

// Writes the shifted copy of channels [range) from src into dst. dst must
// already hold the unshifted content outside the range.
void shift_channels(const Tensor5& src, Tensor5& dst, const AxisSet& axes, int offset,
                    const ChannelRange& range) {
    const Dims5 d = src.dims();
    const int dt = axes.t ? offset : 0;
    const int dh = axes.h ? offset : 0;
    const int dw = axes.w ? offset : 0;

    for (index_t n = 0; n < d.n; ++n) {
        for (index_t c = range.start; c < range.end; ++c) {
            for (index_t t = 0; t < d.t; ++t) {
                const index_t st = t - dt;
                for (index_t h = 0; h < d.h; ++h) {
                    const index_t sh = h - dh;
                    double* out_row = dst.data() + dst.offset(n, c, t, h, 0);
                    if (st < 0 || st >= d.t || sh < 0 || sh >= d.h) {
                        std::fill(out_row, out_row + d.w, 0.0);
                        continue;
                    }
                    const double* in_row = src.data() + src.offset(n, c, st, sh, 0);
                    if (dw == 0) {
                        std::memcpy(out_row, in_row, static_cast<std::size_t>(d.w) * sizeof(double));
                    } else if (dw == 1) {
                        out_row[0] = 0.0;
                        std::memcpy(out_row + 1, in_row, static_cast<std::size_t>(d.w - 1) * sizeof(double));
                    } else {  // dw == -1
                        std::memcpy(out_row, in_row + 1, static_cast<std::size_t>(d.w - 1) * sizeof(double));
                        out_row[d.w - 1] = 0.0;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor5 shift_along_axes(const Tensor5& x, const AxisSet& axes, int offset, ChannelRange range) {
    check_range(x, range);
    if (offset != 1 && offset != -1) throw ContractError("shift offset must be +1 or -1");
    Tensor5 out = x;
    if (!axes.empty()) shift_channels(x, out, axes, offset, range);
    return out;
}

Tensor5 apply_stsm(const Tensor5& x, const ShiftSpec& spec) {
    if (spec.channels != x.dims().c) {
        throw ConfigError("shift spec built for C=" + std::to_string(spec.channels) +
                          " applied to tensor with C=" + std::to_string(x.dims().c));
    }
    Tensor5 out = x;
    for (const auto& entry : spec.layout) {
        if (entry.range.size() == 0) continue;
        shift_channels(x, out, entry.group.axes, entry.group.direction, entry.range);
    }
    return out;
}

void apply_stsm_in_place(Tensor5& x, const ShiftSpec& spec) {
    if (spec.channels != x.dims().c) {
        throw ConfigError("shift spec built for C=" + std::to_string(spec.channels) +
                          " applied to tensor with C=" + std::to_string(x.dims().c));
    }
    const Dims5 d = x.dims();
    const std::size_t row_bytes = static_cast<std::size_t>(d.w) * sizeof(double);

    for (const auto& entry : spec.layout) {
        const AxisSet& axes = entry.group.axes;
        const int off = entry.group.direction;
        const int dt = axes.t ? off : 0;
        const int dh = axes.h ? off : 0;
        const int dw = axes.w ? off : 0;

        for (index_t n = 0; n < d.n; ++n) {
            for (index_t c = entry.range.start; c < entry.range.end; ++c) {
                // Iterate destinations so that every source row is read
                // before it is overwritten: descending along an axis moving
                // forward, ascending along one moving backward.
                for (index_t ti = 0; ti < d.t; ++ti) {
                    const index_t t = (dt == 1) ? d.t - 1 - ti : ti;
                    const index_t st = t - dt;
                    for (index_t hi = 0; hi < d.h; ++hi) {
                        const index_t h = (dh == 1) ? d.h - 1 - hi : hi;
                        const index_t sh = h - dh;
                        double* dst = x.data() + x.offset(n, c, t, h, 0);
                        if (st < 0 || st >= d.t || sh < 0 || sh >= d.h) {
                            std::memset(dst, 0, row_bytes);
                            continue;
                        }
                        double* src = x.data() + x.offset(n, c, st, sh, 0);
                        if (dw == 0) {
                            if (src != dst) std::memmove(dst, src, row_bytes);
                        } else if (dw == 1) {
                            std::memmove(dst + 1, src, static_cast<std::size_t>(d.w - 1) * sizeof(double));
                            dst[0] = 0.0;
                        } else {
                            std::memmove(dst, src + 1, static_cast<std::size_t>(d.w - 1) * sizeof(double));
                            dst[d.w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

SparseKernel build_sparse_kernel(const ShiftSpec& spec) {
    SparseKernel k;
    k.channels = spec.channels;
    std::array<double, 27> identity{};
    identity[SparseKernel::tap_index(1, 1, 1)] = 1.0;
    k.taps.assign(static_cast<std::size_t>(spec.channels), identity);

    for (const auto& entry : spec.layout) {
        const int off = entry.group.direction;
        // out(i) = x(i - d) under out(i) = sum_j tap[j] * x(i + j - 1)
        // solves to a tap at j = 1 - d on each shifted axis.
        const int kt = entry.group.axes.t ? 1 - off : 1;
        const int kh = entry.group.axes.h ? 1 - off : 1;
        const int kw = entry.group.axes.w ? 1 - off : 1;
        std::array<double, 27> taps{};
        taps[SparseKernel::tap_index(kt, kh, kw)] = 1.0;
        for (index_t c = entry.range.start; c < entry.range.end; ++c) {
            k.taps[static_cast<std::size_t>(c)] = taps;
        }
    }
    return k;
}

Tensor5 oracle_sparse_conv(const Tensor5& x, const SparseKernel& k) {
    if (k.channels != x.dims().c) {
        throw ConfigError("sparse kernel built for C=" + std::to_string(k.channels) +
                          " applied to tensor with C=" + std::to_string(x.dims().c));
    }
    const Dims5 d = x.dims();
    Tensor5 out(d, 0.0);
    for (index_t n = 0; n < d.n; ++n) {
        for (index_t c = 0; c < d.c; ++c) {
            const std::array<double, 27>& taps = k.taps[static_cast<std::size_t>(c)];
            for (index_t t = 0; t < d.t; ++t) {
                for (index_t h = 0; h < d.h; ++h) {
                    for (index_t w = 0; w < d.w; ++w) {
                        double acc = 0.0;
                        for (int kt = 0; kt < 3; ++kt) {
                            const index_t it = t + kt - 1;
                            if (it < 0 || it >= d.t) continue;
                            for (int kh = 0; kh < 3; ++kh) {
                                const index_t ih = h + kh - 1;
                                if (ih < 0 || ih >= d.h) continue;
                                for (int kw = 0; kw < 3; ++kw) {
                                    const index_t iw = w + kw - 1;
                                    if (iw < 0 || iw >= d.w) continue;
                                    acc += taps[static_cast<std::size_t>(SparseKernel::tap_index(kt, kh, kw))] *
                                           x.at(n, c, it, ih, iw);
                                }
                            }
                        }
                        out.at(n, c, t, h, w) = acc;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace stsm
