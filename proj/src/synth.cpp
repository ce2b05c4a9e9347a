#include "stsm/synth.hpp"

#include <fstream>
#include <string>

#include "stsm/rng.hpp"
#include "stsm/tensor_io.hpp"

namespace stsm {

namespace {

void check_geometry(const MotionTask& task) {
    if (task.frames < 1 || task.height < 1 || task.width < 1 || task.square < 1) {
        throw ConfigError("motion task dims must be positive");
    }
    if (task.channels < 1) throw ConfigError("motion task channel count must be >= 1");
    if (task.noise < 0.0 || task.noise > 1.0) {
        throw ConfigError("noise amplitude must lie in [0,1]");
    }
    const index_t travel = task.frames - 1;
    if (task.square + travel > task.height || task.square + travel > task.width) {
        throw ConfigError("square of size " + std::to_string(task.square) + " travelling " +
                          std::to_string(travel) + " steps does not fit in " +
                          std::to_string(task.height) + "x" + std::to_string(task.width));
    }
}

// Renders the forward-moving clip of a pair: a square starting at (y0, x0)
// moving one pixel per frame along +x (horizontal) or +y (vertical).
Tensor5 render_clip(const MotionTask& task, index_t y0, index_t x0, bool horizontal, Rng& rng) {
    Tensor5 clip(Dims5{1, task.channels, task.frames, task.height, task.width}, 0.0);
    const double base = 1.0 - task.noise;
    for (index_t t = 0; t < task.frames; ++t) {
        const index_t sy = horizontal ? y0 : y0 + t;
        const index_t sx = horizontal ? x0 + t : x0;
        for (index_t h = 0; h < task.height; ++h) {
            for (index_t w = 0; w < task.width; ++w) {
                const bool inside = h >= sy && h < sy + task.square && w >= sx && w < sx + task.square;
                const double noise = task.noise > 0.0 ? rng.uniform(0.0, task.noise) : 0.0;
                const double v = (inside ? base : 0.0) + noise;
                for (index_t c = 0; c < task.channels; ++c) clip.at(0, c, t, h, w) = v;
            }
        }
    }
    return clip;
}

Tensor5 time_reverse(const Tensor5& x) {
    const Dims5 d = x.dims();
    Tensor5 out(d, 0.0);
    for (index_t n = 0; n < d.n; ++n)
        for (index_t c = 0; c < d.c; ++c)
            for (index_t t = 0; t < d.t; ++t)
                for (index_t h = 0; h < d.h; ++h)
                    for (index_t w = 0; w < d.w; ++w)
                        out.at(n, c, t, h, w) = x.at(n, c, d.t - 1 - t, h, w);
    return out;
}

}  // namespace

std::vector<ClipSample> generate_batch(const MotionTask& task, int n, std::uint64_t seed) {
    check_geometry(task);
    if (n <= 0 || n % kMotionClasses != 0) {
        throw ConfigError("sample count must be a positive multiple of " +
                          std::to_string(kMotionClasses) + ", got " + std::to_string(n));
    }

    Rng rng(Rng::derive(seed, 0xc11b));
    const index_t travel = task.frames - 1;
    const index_t max_y_h = task.height - task.square;      // horizontal motion: free in y
    const index_t max_x_h = task.width - task.square - travel;
    const index_t max_y_v = task.height - task.square - travel;
    const index_t max_x_v = task.width - task.square;

    std::vector<ClipSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int quad = 0; quad < n / kMotionClasses; ++quad) {
        // Horizontal pair: a right clip and its exact time reversal.
        {
            const index_t y0 = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(max_y_h + 1)));
            const index_t x0 = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(max_x_h + 1)));
            Tensor5 fwd = render_clip(task, y0, x0, true, rng);
            Tensor5 rev = time_reverse(fwd);
            out.push_back({std::move(fwd), static_cast<int>(Motion::right), seed});
            out.push_back({std::move(rev), static_cast<int>(Motion::left), seed});
        }
        // Vertical pair.
        {
            const index_t y0 = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(max_y_v + 1)));
            const index_t x0 = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(max_x_v + 1)));
            Tensor5 fwd = render_clip(task, y0, x0, false, rng);
            Tensor5 rev = time_reverse(fwd);
            out.push_back({std::move(fwd), static_cast<int>(Motion::down), seed});
            out.push_back({std::move(rev), static_cast<int>(Motion::up), seed});
        }
    }
    return out;
}

void save_clip_file(const ClipSample& sample, const std::filesystem::path& path) {
    save_tensor(sample.clip, path);
    std::ofstream side(path.string() + ".label");
    if (!side) throw FormatError("cannot write label sidecar for " + path.string());
    side << "label=" << sample.label << "\n";
}

ClipSample load_clip_file(const std::filesystem::path& path) {
    ClipSample sample;
    sample.clip = load_tensor(path);
    std::ifstream side(path.string() + ".label");
    if (!side) throw FormatError("missing label sidecar for " + path.string());
    std::string line;
    std::getline(side, line);
    const std::string prefix = "label=";
    if (line.rfind(prefix, 0) != 0) {
        throw FormatError("label sidecar must contain 'label=<int>', got '" + line + "'");
    }
    try {
        sample.label = std::stoi(line.substr(prefix.size()));
    } catch (const std::exception&) {
        throw FormatError("bad label value in sidecar: '" + line + "'");
    }
    if (sample.label < 0) throw FormatError("negative label in sidecar");
    return sample;
}

Tensor5 stack_clips(const std::vector<ClipSample>& samples) {
    if (samples.empty()) throw ContractError("cannot stack an empty sample list");
    const Dims5 d = samples.front().clip.dims();
    Tensor5 batch(Dims5{static_cast<index_t>(samples.size()), d.c, d.t, d.h, d.w}, 0.0);
    const index_t per = d.c * d.t * d.h * d.w;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].clip.dims() == d)) throw ShapeError("inconsistent clip dims in batch");
        const double* src = samples[i].clip.data();
        double* dst = batch.data() + static_cast<index_t>(i) * per;
        for (index_t j = 0; j < per; ++j) dst[j] = src[j];
    }
    return batch;
}

std::vector<int> labels_of(const std::vector<ClipSample>& samples) {
    std::vector<int> labels;
    labels.reserve(samples.size());
    for (const ClipSample& s : samples) labels.push_back(s.label);
    return labels;
}

}  // namespace stsm
