// Acceptance suite: one verifiable claim per criterion, each printing a
// single [PASS]/[FAIL] line. Run everything or a single criterion with
// --criterion N; --cli names the command-line binary used by criterion 8.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stsm/autodiff.hpp"
#include "stsm/experiment.hpp"
#include "stsm/network.hpp"
#include "stsm/rng.hpp"
#include "stsm/shift.hpp"
#include "stsm/synth.hpp"

using namespace stsm;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

Tensor5 random_tensor(Dims5 d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor5 t(d, 0.0);
    for (index_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

const std::vector<std::string> kTablePatterns = {
    "T", "H", "W", "H+W", "HW", "T+H+W", "T+HW", "T+H+W+HW", "TH+TW+HW", "T+H+W+TH+TW+HW"};

int worker_threads() {
#ifdef _OPENMP
    return std::min(8, omp_get_max_threads());
#else
    return 1;
#endif
}

// ---------------------------------------------------------------------------
// 1. Zero overhead: identical cost reports with and without shift layers.
// ---------------------------------------------------------------------------
bool criterion_1(std::string& detail) {
    const std::vector<std::string> specs = {"pattern=T+H+W f=3/8", "pattern=T f=1/4",
                                            "pattern=T+HW f=3/8", "pattern=H+W f=1/2",
                                            "pattern=THW f=1/2"};
    int combos = 0;
    for (const std::string& preset : preset_names()) {
        NetworkConfig base = preset_config(preset);
        const Dims5 in{1, base.in_channels, 8,
                       preset == "bottleneck" ? 224 : 32, preset == "bottleneck" ? 224 : 32};
        NetworkConfig no_shift = base;
        no_shift.shift = parse_shift_pattern("pattern=none f=0");
        const CostReport plain = cost_report(build_network(no_shift), in);

        for (const std::string& spec : specs) {
            NetworkConfig with = base;
            with.shift = parse_shift_pattern(spec);
            const CostReport shifted = cost_report(build_network(with), in);
            if (shifted.total_mults_adds != plain.total_mults_adds ||
                shifted.total_parameters != plain.total_parameters) {
                detail = preset + " + " + spec + ": MA delta " +
                         std::to_string(shifted.total_mults_adds - plain.total_mults_adds) +
                         ", param delta " +
                         std::to_string(shifted.total_parameters - plain.total_parameters);
                return false;
            }
            for (const LayerCost& row : shifted.rows) {
                if (row.kind == "stsm" && (row.mults_adds != 0 || row.parameters != 0)) {
                    detail = preset + " + " + spec + ": shift row '" + row.name + "' has nonzero cost";
                    return false;
                }
            }
            ++combos;
        }
    }
    detail = std::to_string(preset_names().size()) + " presets x " + std::to_string(specs.size()) +
             " shift specs, " + std::to_string(combos) + " comparisons, all deltas exactly 0";
    return true;
}

// ---------------------------------------------------------------------------
// 2. Shift equals one-hot depthwise convolution, bit for bit.
// ---------------------------------------------------------------------------
bool criterion_2(std::string& detail) {
    Rng rng(20240202);
    int instances = 0;
    for (const std::string& row : kTablePatterns) {
        for (int trial = 0; trial < 20; ++trial) {
            const Dims5 d{1 + static_cast<index_t>(rng.below(2)),
                          12 + static_cast<index_t>(rng.below(21)),
                          2 + static_cast<index_t>(rng.below(7)),
                          2 + static_cast<index_t>(rng.below(7)),
                          2 + static_cast<index_t>(rng.below(7))};
            const Fraction f = (trial % 2) ? Fraction(3, 8) : Fraction(1, 2);
            ShiftSpec spec = build_shift_spec(d.c, parse_pattern_groups(row), f);
            Tensor5 x = random_tensor(d, rng);
            Tensor5 a = apply_stsm(x, spec);
            Tensor5 b = oracle_sparse_conv(x, build_sparse_kernel(spec));
            if (!bit_equal(a, b)) {
                detail = "mismatch for pattern " + row + " dims " + d.str();
                return false;
            }
            ++instances;
        }
    }
    detail = std::to_string(instances) + " random instances over " +
             std::to_string(kTablePatterns.size()) + " patterns, all bit-exact";
    return true;
}

// ---------------------------------------------------------------------------
// 3. Shift algebra: linearity, norm, interior restoration, adjoint.
// ---------------------------------------------------------------------------
bool criterion_3(std::string& detail) {
    Rng rng(33);
    auto random_spec = [&](index_t c) {
        const std::string row = kTablePatterns[rng.below(kTablePatterns.size())];
        const Fraction f = (rng.below(2) == 0) ? Fraction(3, 8) : Fraction(1, 2);
        return build_shift_spec(c, parse_pattern_groups(row), f);
    };

    for (int trial = 0; trial < 100; ++trial) {
        const Dims5 d{1 + static_cast<index_t>(rng.below(2)), 12 + static_cast<index_t>(rng.below(13)),
                      2 + static_cast<index_t>(rng.below(5)), 2 + static_cast<index_t>(rng.below(5)),
                      2 + static_cast<index_t>(rng.below(5))};
        ShiftSpec s = random_spec(d.c);
        Tensor5 x = random_tensor(d, rng);
        Tensor5 y = random_tensor(d, rng);

        // linearity, exact
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        Tensor5 lhs = apply_stsm(elementwise(scale(x, a), scale(y, b), EwOp::add), s);
        Tensor5 rhs = elementwise(scale(apply_stsm(x, s), a), scale(apply_stsm(y, s), b), EwOp::add);
        if (!bit_equal(lhs, rhs)) {
            detail = "linearity violated on trial " + std::to_string(trial);
            return false;
        }

        // norm non-increase
        if (l2_norm(apply_stsm(x, s)) > l2_norm(x) * (1.0 + 1e-12)) {
            detail = "norm grew on trial " + std::to_string(trial);
            return false;
        }

        // adjoint inner-product identity
        const double lhs_ip = dot(apply_stsm(x, s), y);
        const double rhs_ip = dot(x, apply_stsm(y, shift_adjoint(s)));
        const double denom = std::max({std::fabs(lhs_ip), std::fabs(rhs_ip), 1e-30});
        if (std::fabs(lhs_ip - rhs_ip) / denom > 1e-12) {
            detail = "adjoint identity off by " + std::to_string(std::fabs(lhs_ip - rhs_ip) / denom);
            return false;
        }

        // interior restoration on the first nonidentity group (if any)
        if (!s.layout.empty() && s.layout.front().range.size() > 0) {
            const auto& entry = s.layout.front();
            Tensor5 fwd = shift_along_axes(x, entry.group.axes, +1, entry.range);
            Tensor5 round = shift_along_axes(fwd, entry.group.axes, -1, entry.range);
            for (index_t n = 0; n < d.n; ++n)
                for (index_t c = entry.range.start; c < entry.range.end; ++c)
                    for (index_t t = 0; t < d.t; ++t)
                        for (index_t h = 0; h < d.h; ++h)
                            for (index_t w = 0; w < d.w; ++w) {
                                const bool edge = (entry.group.axes.t && t == d.t - 1) ||
                                                  (entry.group.axes.h && h == d.h - 1) ||
                                                  (entry.group.axes.w && w == d.w - 1);
                                const double expect = edge ? 0.0 : x.at(n, c, t, h, w);
                                if (round.at(n, c, t, h, w) != expect) {
                                    detail = "interior restoration broke on trial " +
                                             std::to_string(trial);
                                    return false;
                                }
                            }
        }
    }
    detail = "linearity/norm/adjoint/restoration on 100 random instances each";
    return true;
}

// ---------------------------------------------------------------------------
// 4. Reverse-mode gradients vs central finite differences.
// ---------------------------------------------------------------------------
bool criterion_4(std::string& detail) {
    int worst_seed = -1;
    double worst = 0.0;
    int total_excluded = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        NetworkConfig cfg;
        cfg.preset = "custom";
        cfg.in_channels = 1 + static_cast<int>(rng.below(2)) * 2;
        cfg.num_classes = 3 + static_cast<int>(rng.below(3));
        cfg.base_channels = 6 + static_cast<int>(rng.below(2)) * 2;
        cfg.stage_blocks = rng.below(2) == 0 ? std::vector<int>{1} : std::vector<int>{1, 1};
        cfg.stem_kernel = 3;
        cfg.stem_stride = 1;
        cfg.stem_pool = rng.below(2) == 0;
        const char* patterns[] = {"T", "T+H+W", "T+HW", "TH+TW+HW"};
        const char* fracs[] = {"1/4", "3/8", "1/2"};
        cfg.shift = parse_shift_pattern(std::string("pattern=") + patterns[rng.below(4)] + " f=" +
                                        fracs[rng.below(3)]);

        LayerGraph g = build_network(cfg);
        ParamStore params = init_params(g, Rng::derive(seed, 2));
        Rng data_rng(Rng::derive(seed, 3));
        const Dims5 in{2, cfg.in_channels, 3 + static_cast<index_t>(data_rng.below(2)), 6, 6};
        Tensor5 x = random_tensor(in, data_rng, 0.0, 1.0);
        std::vector<int> labels;
        for (index_t n = 0; n < in.n; ++n) {
            labels.push_back(
                static_cast<int>(data_rng.below(static_cast<std::uint64_t>(cfg.num_classes))));
        }

        FiniteDiffReport report =
            finite_diff_check(g, params, x, labels, 1e-5, 1e-4, 40, Rng::derive(seed, 4));
        total_excluded += report.excluded;
        if (report.max_rel_error > worst) {
            worst = report.max_rel_error;
            worst_seed = static_cast<int>(seed);
        }
        if (!report.pass) {
            detail = "seed " + std::to_string(seed) + " max rel error " +
                     std::to_string(report.max_rel_error);
            return false;
        }
    }
    std::ostringstream os;
    os << "20 networks, worst rel error " << worst << " (seed " << worst_seed << "), "
       << total_excluded << " kink-excluded components, tolerance 1e-4";
    detail = os.str();
    return true;
}

// ---------------------------------------------------------------------------
// 5. Temporal-order trap: frame-averaged nets cannot tell reversal pairs
//    apart; shifted nets must, and must reach 0.90 accuracy after training.
// ---------------------------------------------------------------------------
ExperimentConfig trap_config() {
    ExperimentConfig cfg;
    cfg.preset = "tiny";
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.lr = 0.05;
    cfg.lr_decay_epochs = {15, 25};
    cfg.lr_decay_factor = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.seed = 7;
    cfg.train_samples = 800;
    cfg.eval_samples = 200;
    // task geometry: defaults (8 frames, 32x32, square 5, noise 0.05)
    return cfg;
}

bool criterion_5(std::string& detail) {
    ExperimentConfig cfg = trap_config();

    TrainedModel baseline;
    train_and_eval(cfg, parse_shift_pattern("pattern=T+H+W f=0"), cfg.seed, &baseline);

    // 200 reversal pairs of each orientation -> 800 clips
    std::vector<ClipSample> pairs = generate_batch(cfg.task, 800, Rng::derive(cfg.seed, 77));
    PairEvalResult horizontal = evaluate_reversal_pairs(baseline.graph, baseline.params, pairs,
                                                        Motion::right, Motion::left);
    if (horizontal.pairs != 200) {
        detail = "expected 200 horizontal pairs, got " + std::to_string(horizontal.pairs);
        return false;
    }
    if (!horizontal.logits_all_equal) {
        detail = "f=0 logits differ across a reversal pair (max gap " +
                 std::to_string(horizontal.max_logit_gap) + ")";
        return false;
    }
    if (horizontal.subtask_accuracy < 0.45 || horizontal.subtask_accuracy > 0.55) {
        detail = "f=0 left/right accuracy " + std::to_string(horizontal.subtask_accuracy) +
                 " outside [0.45, 0.55]";
        return false;
    }
    const double base_acc = evaluate_accuracy(baseline.graph, baseline.params, pairs);

    TrainedModel shifted;
    train_and_eval(cfg, parse_shift_pattern("pattern=T+H+W f=3/8"), cfg.seed, &shifted);
    const double shift_acc = evaluate_accuracy(shifted.graph, shifted.params, pairs);

    if (shift_acc < 0.90) {
        detail = "shifted accuracy " + std::to_string(shift_acc) + " < 0.90";
        return false;
    }
    if (shift_acc - base_acc < 0.30) {
        detail = "margin " + std::to_string(shift_acc - base_acc) + " < 0.30 (shifted " +
                 std::to_string(shift_acc) + ", baseline " + std::to_string(base_acc) + ")";
        return false;
    }
    std::ostringstream os;
    os << "baseline acc " << base_acc << " (left/right " << horizontal.subtask_accuracy
       << ", logits exactly equal), shifted acc " << shift_acc << ", margin "
       << (shift_acc - base_acc);
    detail = os.str();
    return true;
}

// ---------------------------------------------------------------------------
// 6. Pattern ordering at toy scale over three seeds.
// ---------------------------------------------------------------------------
bool criterion_6(std::string& detail) {
    ExperimentConfig cfg;
    cfg.preset = "tiny";
    cfg.epochs = 15;
    cfg.batch_size = 32;
    cfg.lr = 0.05;
    cfg.lr_decay_epochs = {10};
    cfg.lr_decay_factor = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.train_samples = 480;
    cfg.eval_samples = 128;
    cfg.task.frames = 6;
    cfg.task.height = cfg.task.width = 24;
    cfg.task.square = 4;

    const std::vector<std::string> patterns = {"T+H+W", "T", "H"};
    const std::vector<std::uint64_t> seeds = {11, 22, 33};
    std::ostringstream os;
    std::vector<double> means;
    for (const std::string& pattern : patterns) {
        double sum = 0.0, lo = 1.0, hi = 0.0;
        for (std::uint64_t seed : seeds) {
            ShiftPattern spec;
            spec.groups = parse_pattern_groups(pattern);
            spec.shifted_fraction = Fraction(3, 8);
            RunRecord record = train_and_eval(cfg, spec, seed);
            sum += record.final_accuracy;
            lo = std::min(lo, record.final_accuracy);
            hi = std::max(hi, record.final_accuracy);
        }
        const double mean = sum / static_cast<double>(seeds.size());
        means.push_back(mean);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s mean %.4f range [%.4f, %.4f]; ", pattern.c_str(), mean,
                      lo, hi);
        os << buf;
    }
    const bool ok = means[0] >= means[1] - 0.02 && means[1] >= means[2] - 0.02;
    detail = os.str() + (ok ? "ordering holds within 0.02" : "ordering violated");
    return ok;
}

// ---------------------------------------------------------------------------
// 7. Microbenchmark sanity.
// ---------------------------------------------------------------------------
bool criterion_7(std::string& detail) {
    const Dims5 d{2, 32, 8, 32, 32};
    ShiftSpec spec = build_shift_spec(d.c, parse_shift_pattern("pattern=T+H+W f=3/8"));
    SparseKernel kernel = build_sparse_kernel(spec);
    Rng rng(0xbead);
    Tensor5 x = random_tensor(d, rng);

    Tensor5 copy_out = apply_stsm(x, spec);
    Tensor5 inplace_out = x;
    apply_stsm_in_place(inplace_out, spec);
    Tensor5 conv_out = oracle_sparse_conv(x, kernel);
    if (!bit_equal(copy_out, inplace_out) || !bit_equal(copy_out, conv_out)) {
        detail = "implementations disagree before timing";
        return false;
    }

    auto median = [&](auto&& fn) {
        fn();
        std::vector<double> times;
        for (int r = 0; r < 5; ++r) {
            const auto t0 = clk::now();
            fn();
            times.push_back(std::chrono::duration<double>(clk::now() - t0).count());
        }
        std::sort(times.begin(), times.end());
        return times[2];
    };
    const double copy_s = median([&] { volatile double s = apply_stsm(x, spec)[0]; (void)s; });
    const double inplace_s = median([&] {
        Tensor5 y = x;
        apply_stsm_in_place(y, spec);
        volatile double s = y[0];
        (void)s;
    });
    const double conv_s = median([&] { volatile double s = oracle_sparse_conv(x, kernel)[0]; (void)s; });

    if (conv_s < copy_s || conv_s < inplace_s) {
        detail = "sparse convolution timed faster than a direct shift";
        return false;
    }
    std::ostringstream os;
    os << "outputs identical; medians over 5 reps: copy " << copy_s * 1e3 << " ms, in-place "
       << inplace_s * 1e3 << " ms, sparse conv " << conv_s * 1e3 << " ms";
    detail = os.str();
    return true;
}

// ---------------------------------------------------------------------------
// 8. CLI determinism: fixed-seed reruns produce byte-identical CSVs.
// ---------------------------------------------------------------------------
std::string g_cli_path;

int run_cli(const std::vector<std::string>& args) {
    std::string cmd = g_cli_path;
    for (const std::string& a : args) cmd += " " + a;
    cmd += " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    if (!is) return "<missing " + p.string() + ">";
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

// bench.csv carries measured ns/element in its last column; determinism is
// asserted for everything but that measurement.
std::string strip_last_column(const std::string& csv) {
    std::istringstream is(csv);
    std::string line, out;
    while (std::getline(is, line)) {
        if (!line.empty() && line[0] != '#' && line.find(',') != std::string::npos) {
            line = line.substr(0, line.rfind(','));
        }
        out += line + "\n";
    }
    return out;
}

bool criterion_8(std::string& detail) {
    if (g_cli_path.empty()) {
        detail = "no --cli path supplied";
        return false;
    }
    const fs::path root = fs::temp_directory_path() / "stsm_acceptance_8";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::string cfg_common =
        "preset=micro\n"
        "spec=pattern=T+H+W f=3/8\n"
        "epochs=2\n"
        "batch_size=16\n"
        "train_samples=32\n"
        "eval_samples=16\n"
        "frames=4\n"
        "height=12\n"
        "width=12\n"
        "square=3\n"
        "seed=5\n";
    {
        std::ofstream os(root / "train.cfg");
        os << cfg_common;
    }
    {
        std::ofstream os(root / "alpha.cfg");
        os << cfg_common << "epochs=1\nalphas=0,3/8\n";
    }
    {
        std::ofstream os(root / "pattern.cfg");
        os << cfg_common << "epochs=1\npatterns=T,H\n";
    }
    {
        std::ofstream os(root / "cost.cfg");
        os << cfg_common << "input=1x3x8x32x32\npreset=tiny\n";
    }
    {
        std::ofstream os(root / "bench.cfg");
        os << cfg_common << "bench_dims=1x16x4x16x16\nreps=3\n";
    }

    struct Case {
        const char* sub;
        const char* cfg;
        const char* artifact;
        bool strip_timing;
    };
    const Case cases[] = {
        {"train", "train.cfg", "run.csv", false},
        {"sweep-alpha", "alpha.cfg", "sweep.csv", false},
        {"sweep-pattern", "pattern.cfg", "sweep.csv", false},
        {"cost", "cost.cfg", "cost.txt", false},
        {"bench-shift", "bench.cfg", "bench.csv", true},
    };

    std::ostringstream os;
    for (const Case& c : cases) {
        const fs::path out1 = root / (std::string(c.sub) + "_1");
        const fs::path out2 = root / (std::string(c.sub) + "_2");
        for (const fs::path& out : {out1, out2}) {
            const int rc = run_cli({c.sub, "--config", (root / c.cfg).string(), "--out", out.string()});
            if (rc != 0) {
                detail = std::string(c.sub) + " exited with code " + std::to_string(rc);
                return false;
            }
        }
        std::string a = slurp(out1 / c.artifact);
        std::string b = slurp(out2 / c.artifact);
        if (c.strip_timing) {
            a = strip_last_column(a);
            b = strip_last_column(b);
        }
        if (a != b) {
            detail = std::string(c.sub) + ": " + c.artifact + " differs between fixed-seed reruns";
            return false;
        }
        os << c.sub << " ok; ";
    }
    fs::remove_all(root);
    detail = os.str() + "bench timing column exempt (measured time is not seed-controlled)";
    return true;
}

struct Criterion {
    int id;
    const char* name;
    double budget_core_minutes;  // > 0: core-minute budget; else wall seconds
    double budget_wall_seconds;
    std::function<bool(std::string&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
    if (!std::getenv("OMP_NUM_THREADS")) {
        omp_set_num_threads(std::min(8, omp_get_max_threads()));
    }
#endif

    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
        if (arg == "--cli" && i + 1 < argc) g_cli_path = argv[++i];
    }

    const std::vector<Criterion> criteria = {
        {1, "zero overhead across presets and shift specs", 0, 1.0, criterion_1},
        {2, "shift/sparse-convolution bit equivalence", 0, 30.0, criterion_2},
        {3, "shift algebra (linearity, norm, restoration, adjoint)", 0, 30.0, criterion_3},
        {4, "gradients vs finite differences on 20 tiny nets", 0, 300.0, criterion_4},
        {5, "temporal-order trap and trained-accuracy margin", 15.0 * 8.0, 0, criterion_5},
        {6, "pattern ordering over three seeds", 45.0 * 8.0, 0, criterion_6},
        {7, "microbenchmark correctness gate and oracle slowness", 0, 300.0, criterion_7},
        {8, "CLI determinism under fixed seeds", 0, 900.0, criterion_8},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (only != 0 && c.id != only) continue;
        std::string detail;
        const auto t0 = clk::now();
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double wall = std::chrono::duration<double>(clk::now() - t0).count();

        bool within_budget = true;
        char budget[128];
        if (c.budget_core_minutes > 0) {
            const double core_minutes = wall / 60.0 * worker_threads();
            within_budget = core_minutes <= c.budget_core_minutes;
            std::snprintf(budget, sizeof(budget), "%.1f core-min of %.0f allowed", core_minutes,
                          c.budget_core_minutes);
        } else {
            within_budget = wall <= c.budget_wall_seconds;
            std::snprintf(budget, sizeof(budget), "%.2f s of %.0f allowed", wall,
                          c.budget_wall_seconds);
        }
        if (!within_budget) {
            detail += detail.empty() ? "" : "; ";
            detail += "runtime budget exceeded";
        }

        ok = ok && within_budget;
        std::printf("[%s] criterion %d: %s (%s; %s)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str(), budget);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
