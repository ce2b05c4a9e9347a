#include "stsm/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stsm/rng.hpp"
#include "stsm/shift.hpp"

namespace stsm {

const char* const kRunCsvHeader = "epoch,train_loss,eval_accuracy";
const char* const kAlphaCsvHeader = "f,accuracy,mults_adds,parameters";
const char* const kPatternCsvHeader = "pattern,accuracy,mults_adds,parameters";
const char* const kBenchCsvHeader = "impl,n,c,t,h,w,elements,reps,ns_per_element";

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

[[noreturn]] void config_fail(const std::string& origin, int line, const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

long long parse_ll(const std::string& s) {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) parts.push_back(item);
    return parts;
}

Dims5 parse_dims(const std::string& s) {
    const std::vector<std::string> parts = split(s, 'x');
    if (parts.size() != 5) throw std::invalid_argument("expected NxCxTxHxW");
    Dims5 d;
    d.n = parse_ll(parts[0]);
    d.c = parse_ll(parts[1]);
    d.t = parse_ll(parts[2]);
    d.h = parse_ll(parts[3]);
    d.w = parse_ll(parts[4]);
    return d;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    cfg.spec = parse_shift_pattern("pattern=T+H+W f=3/8");

    std::istringstream is(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto eq = line.find('=');
        if (eq == std::string::npos) config_fail(origin, line_no, "expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) config_fail(origin, line_no, "empty key");

        try {
            if (key == "preset") {
                preset_config(value);  // validates the name
                cfg.preset = value;
            } else if (key == "spec") {
                cfg.spec = parse_shift_pattern(value);
            } else if (key == "epochs") {
                cfg.epochs = static_cast<int>(parse_ll(value));
                if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
            } else if (key == "batch_size") {
                cfg.batch_size = static_cast<int>(parse_ll(value));
                if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
            } else if (key == "lr") {
                cfg.lr = parse_double(value);
                if (cfg.lr <= 0.0) throw ConfigError("lr must be > 0");
            } else if (key == "lr_decay_epochs") {
                cfg.lr_decay_epochs.clear();
                if (!value.empty()) {
                    for (const std::string& p : split(value, ',')) {
                        cfg.lr_decay_epochs.push_back(static_cast<int>(parse_ll(trim(p))));
                    }
                }
            } else if (key == "lr_decay_factor") {
                cfg.lr_decay_factor = parse_double(value);
                if (cfg.lr_decay_factor <= 0.0) throw ConfigError("lr_decay_factor must be > 0");
            } else if (key == "momentum") {
                cfg.momentum = parse_double(value);
            } else if (key == "weight_decay") {
                cfg.weight_decay = parse_double(value);
            } else if (key == "seed") {
                cfg.seed = static_cast<std::uint64_t>(parse_ll(value));
            } else if (key == "train_samples") {
                cfg.train_samples = static_cast<int>(parse_ll(value));
                if (cfg.train_samples < 4) throw ConfigError("train_samples must be >= 4");
            } else if (key == "eval_samples") {
                cfg.eval_samples = static_cast<int>(parse_ll(value));
                if (cfg.eval_samples < 4) throw ConfigError("eval_samples must be >= 4");
            } else if (key == "frames") {
                cfg.task.frames = parse_ll(value);
            } else if (key == "height") {
                cfg.task.height = parse_ll(value);
            } else if (key == "width") {
                cfg.task.width = parse_ll(value);
            } else if (key == "square") {
                cfg.task.square = parse_ll(value);
            } else if (key == "noise") {
                cfg.task.noise = parse_double(value);
            } else if (key == "channels") {
                cfg.task.channels = parse_ll(value);
            } else if (key == "out") {
                cfg.out_dir = value;
            } else if (key == "alphas") {
                cfg.alphas.clear();
                for (const std::string& p : split(value, ',')) {
                    cfg.alphas.push_back(Fraction::parse(trim(p)));
                }
            } else if (key == "patterns") {
                cfg.patterns.clear();
                for (const std::string& p : split(value, ',')) {
                    const std::string tok = trim(p);
                    parse_pattern_groups(tok);  // validates; names the bad token on failure
                    cfg.patterns.push_back(tok);
                }
            } else if (key == "input") {
                cfg.input_dims = parse_dims(value);
            } else if (key == "bench_dims") {
                cfg.bench_dims = parse_dims(value);
            } else if (key == "reps") {
                cfg.bench_reps = static_cast<int>(parse_ll(value));
                if (cfg.bench_reps < 3) throw ConfigError("reps must be >= 3");
            } else {
                throw ConfigError("unknown key '" + key + "'");
            }
        } catch (const ConfigError& e) {
            config_fail(origin, line_no, e.what());
        } catch (const std::exception& e) {
            config_fail(origin, line_no, "bad value for '" + key + "': " + e.what());
        }
    }

    // Cross-field validation (reported without a line number).
    if (cfg.epochs > 0) {
        for (int d : cfg.lr_decay_epochs) {
            if (d < 1) throw ConfigError(origin + ": lr decay epochs must be >= 1");
        }
    }
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_experiment_config_text(buf.str(), path.string());
}

std::vector<std::string> config_echo(const ExperimentConfig& cfg) {
    std::vector<std::string> echo;
    echo.push_back("preset=" + cfg.preset);
    echo.push_back("spec=" + format_shift_pattern(cfg.spec));
    echo.push_back("epochs=" + std::to_string(cfg.epochs));
    echo.push_back("batch_size=" + std::to_string(cfg.batch_size));
    echo.push_back("lr=" + fmt_double(cfg.lr));
    std::string decays;
    for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
        if (i) decays += ',';
        decays += std::to_string(cfg.lr_decay_epochs[i]);
    }
    echo.push_back("lr_decay_epochs=" + decays);
    echo.push_back("lr_decay_factor=" + fmt_double(cfg.lr_decay_factor));
    echo.push_back("momentum=" + fmt_double(cfg.momentum));
    echo.push_back("weight_decay=" + fmt_double(cfg.weight_decay));
    echo.push_back("seed=" + std::to_string(cfg.seed));
    echo.push_back("train_samples=" + std::to_string(cfg.train_samples));
    echo.push_back("eval_samples=" + std::to_string(cfg.eval_samples));
    echo.push_back("frames=" + std::to_string(cfg.task.frames));
    echo.push_back("height=" + std::to_string(cfg.task.height));
    echo.push_back("width=" + std::to_string(cfg.task.width));
    echo.push_back("square=" + std::to_string(cfg.task.square));
    echo.push_back("noise=" + fmt_double(cfg.task.noise));
    echo.push_back("channels=" + std::to_string(cfg.task.channels));
    return echo;
}

DirLock::DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    lock_path_ = dir / ".lock";
    const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw ConfigError("output directory '" + dir.string() +
                          "' is locked by another run (remove .lock if stale)");
    }
    ::close(fd);
    owned_ = true;
}

DirLock::~DirLock() {
    if (owned_) {
        std::error_code ec;
        std::filesystem::remove(lock_path_, ec);
    }
}

namespace {

NetworkConfig network_config_for(const ExperimentConfig& cfg, const ShiftPattern& spec) {
    NetworkConfig net = preset_config(cfg.preset);
    net.in_channels = static_cast<int>(cfg.task.channels);
    net.num_classes = kMotionClasses;
    net.shift = spec;
    return net;
}

double lr_at_epoch(const ExperimentConfig& cfg, int epoch) {
    double lr = cfg.lr;
    for (int d : cfg.lr_decay_epochs) {
        if (epoch >= d) lr *= cfg.lr_decay_factor;
    }
    return lr;
}

double train_set_loss(const LayerGraph& g, ParamStore& params,
                      const std::vector<ClipSample>& samples, int batch_size) {
    double total = 0.0;
    int counted = 0;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<ClipSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                      samples.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor5 x = stack_clips(chunk);
        Tensor5 logits = forward_network(g, params, x);
        total += softmax_cross_entropy(logits, labels_of(chunk)) * static_cast<double>(chunk.size());
        counted += static_cast<int>(chunk.size());
    }
    return total / static_cast<double>(counted);
}

}  // namespace

double evaluate_accuracy(const LayerGraph& g, ParamStore& params,
                         const std::vector<ClipSample>& samples, int batch_size) {
    int correct = 0;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<ClipSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                      samples.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor5 x = stack_clips(chunk);
        const std::vector<int> preds = predict(g, params, x);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            if (preds[i] == chunk[i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

PairEvalResult evaluate_reversal_pairs(const LayerGraph& g, ParamStore& params,
                                       const std::vector<ClipSample>& samples, Motion fwd,
                                       Motion rev) {
    PairEvalResult result;
    int correct = 0, total = 0;
    double max_gap = 0.0;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        if (samples[i].label != static_cast<int>(fwd) || samples[i + 1].label != static_cast<int>(rev)) {
            continue;
        }
        Tensor5 x = stack_clips({samples[i], samples[i + 1]});
        Tensor5 logits = forward_network(g, params, x);
        for (index_t c = 0; c < logits.dims().c; ++c) {
            max_gap = std::max(max_gap,
                               std::fabs(logits.at(0, c, 0, 0, 0) - logits.at(1, c, 0, 0, 0)));
        }
        const std::vector<int> preds = predict(g, params, x);
        if (preds[0] == samples[i].label) ++correct;
        if (preds[1] == samples[i + 1].label) ++correct;
        total += 2;
        ++result.pairs;
        ++i;  // consume the pair
    }
    result.subtask_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    result.max_logit_gap = max_gap;
    result.logits_all_equal = max_gap == 0.0;
    return result;
}

RunRecord train_and_eval(const ExperimentConfig& cfg, const ShiftPattern& spec, std::uint64_t seed,
                         TrainedModel* model_out, std::ostream* log) {
    std::vector<ClipSample> train = generate_batch(cfg.task, cfg.train_samples, Rng::derive(seed, 1));
    std::vector<ClipSample> eval = generate_batch(cfg.task, cfg.eval_samples, Rng::derive(seed, 2));

    LayerGraph graph = build_network(network_config_for(cfg, spec));
    ParamStore params = init_params(graph, Rng::derive(seed, 3));

    RunRecord record;
    record.echo = config_echo(cfg);
    record.cost = cost_report(graph, Dims5{1, cfg.task.channels, cfg.task.frames, cfg.task.height,
                                           cfg.task.width});

    if (cfg.epochs == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRow row;
        row.epoch = 0;
        row.train_loss = train_set_loss(graph, params, train, cfg.batch_size);
        row.eval_accuracy = evaluate_accuracy(graph, params, eval);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        record.epochs.push_back(row);
        record.final_accuracy = row.eval_accuracy;
    }

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(Rng::derive(seed, 1000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        const double lr = lr_at_epoch(cfg, epoch);

        double loss_sum = 0.0;
        int seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ClipSample> chunk;
            chunk.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) chunk.push_back(train[order[i]]);

            Tensor5 x = stack_clips(chunk);
            Tape tape;
            ForwardOptions fwd;
            fwd.training = true;
            fwd.update_running_stats = true;
            fwd.tape = &tape;
            Tensor5 logits = forward_network(graph, params, x, fwd);
            const double loss = softmax_cross_entropy(logits, labels_of(chunk), &tape);
            GradientSet grads = backward(tape);
            sgd_step(params, grads, lr, cfg.momentum, cfg.weight_decay);

            loss_sum += loss * static_cast<double>(chunk.size());
            seen += static_cast<int>(chunk.size());
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.eval_accuracy = evaluate_accuracy(graph, params, eval);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        record.epochs.push_back(row);
        record.final_accuracy = row.eval_accuracy;
        if (log) {
            (*log) << "epoch " << epoch << " lr " << lr << " loss " << fmt_double(row.train_loss)
                   << " acc " << fmt_double(row.eval_accuracy) << "\n";
        }
    }

    if (model_out) {
        model_out->graph = std::move(graph);
        model_out->params = std::move(params);
    }
    return record;
}

namespace {

void write_run_csv(const RunRecord& record, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    for (const std::string& line : record.echo) os << "# " << line << "\n";
    os << kRunCsvHeader << "\n";
    for (const EpochRow& row : record.epochs) {
        os << row.epoch << "," << fmt_double(row.train_loss) << ","
           << fmt_double(row.eval_accuracy) << "\n";
    }
}

void write_timing(const RunRecord& record, const std::filesystem::path& path) {
    std::ofstream os(path);
    for (const EpochRow& row : record.epochs) {
        os << "epoch " << row.epoch << ": " << fmt_double(row.seconds) << " s\n";
    }
}

}  // namespace

RunRecord cmd_train(const ExperimentConfig& cfg, std::ostream* log) {
    DirLock lock(cfg.out_dir);
    const std::filesystem::path out(cfg.out_dir);

    TrainedModel model;
    RunRecord record = train_and_eval(cfg, cfg.spec, cfg.seed, &model, log);

    write_run_csv(record, out / "run.csv");
    write_timing(record, out / "timing.txt");
    {
        std::ofstream os(out / "cost.txt");
        os << record.cost.to_text();
    }
    save_checkpoint(model.graph, model.params, out / "checkpoint");
    return record;
}

std::string cmd_sweep_alpha(const ExperimentConfig& cfg, std::ostream* log) {
    if (cfg.alphas.empty()) {
        throw ConfigError("sweep-alpha requires an 'alphas=' list in the config");
    }
    DirLock lock(cfg.out_dir);

    std::ostringstream csv;
    for (const std::string& line : config_echo(cfg)) csv << "# " << line << "\n";
    csv << kAlphaCsvHeader << "\n";
    for (const Fraction& f : cfg.alphas) {
        ShiftPattern spec = cfg.spec;
        spec.shifted_fraction = f;
        if (log) (*log) << "sweep-alpha f=" << f.str() << "\n";
        RunRecord record = train_and_eval(cfg, spec, cfg.seed, nullptr, log);
        csv << f.str() << "," << fmt_double(record.final_accuracy) << ","
            << record.cost.total_mults_adds << "," << record.cost.total_parameters << "\n";
    }

    const std::string text = csv.str();
    std::ofstream os(std::filesystem::path(cfg.out_dir) / "sweep.csv");
    os << text;
    return text;
}

std::string cmd_sweep_pattern(const ExperimentConfig& cfg, std::ostream* log) {
    if (cfg.patterns.empty()) {
        throw ConfigError("sweep-pattern requires a 'patterns=' list in the config");
    }
    DirLock lock(cfg.out_dir);

    std::ostringstream csv;
    for (const std::string& line : config_echo(cfg)) csv << "# " << line << "\n";
    csv << kPatternCsvHeader << "\n";
    for (const std::string& pattern : cfg.patterns) {
        ShiftPattern spec;
        spec.groups = parse_pattern_groups(pattern);
        spec.shifted_fraction = cfg.spec.shifted_fraction;
        if (log) (*log) << "sweep-pattern " << pattern << "\n";
        RunRecord record = train_and_eval(cfg, spec, cfg.seed, nullptr, log);
        csv << (pattern.empty() ? "none" : pattern) << "," << fmt_double(record.final_accuracy)
            << "," << record.cost.total_mults_adds << "," << record.cost.total_parameters << "\n";
    }

    const std::string text = csv.str();
    std::ofstream os(std::filesystem::path(cfg.out_dir) / "sweep.csv");
    os << text;
    return text;
}

std::string cmd_cost(const ExperimentConfig& cfg, std::ostream* log) {
    DirLock lock(cfg.out_dir);
    NetworkConfig net = network_config_for(cfg, cfg.spec);
    const Dims5 dims = cfg.default_input_dims();
    net.in_channels = static_cast<int>(dims.c);
    LayerGraph graph = build_network(net);
    const CostReport report = cost_report(graph, dims);
    const std::string text = report.to_text();
    std::ofstream os(std::filesystem::path(cfg.out_dir) / "cost.txt");
    os << text;
    if (log) (*log) << text;
    return text;
}

std::string cmd_bench_shift(const ExperimentConfig& cfg, std::ostream* log) {
    if (cfg.bench_reps < 3) throw ConfigError("bench-shift needs reps >= 3");
    DirLock lock(cfg.out_dir);

    const Dims5 d = cfg.bench_dims;
    const ShiftSpec spec = build_shift_spec(d.c, cfg.spec);
    const SparseKernel kernel = build_sparse_kernel(spec);

    Rng rng(Rng::derive(cfg.seed, 0xbe));
    Tensor5 x(d, 0.0);
    for (index_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);

    // Correctness gate before any timing.
    const Tensor5 ref = apply_stsm(x, spec);
    Tensor5 inplace = x;
    apply_stsm_in_place(inplace, spec);
    const Tensor5 conv = oracle_sparse_conv(x, kernel);
    if (!bit_equal(ref, inplace) || !bit_equal(ref, conv)) {
        throw ContractError("shift implementations disagree; refusing to time them");
    }

    auto median_ns = [&](auto&& fn) {
        std::vector<double> times;
        fn();  // warmup
        for (int r = 0; r < cfg.bench_reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            fn();
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        return times[times.size() / 2];
    };

    const double elements = static_cast<double>(x.size());
    const double copy_ns = median_ns([&] { volatile double sink = apply_stsm(x, spec)[0]; (void)sink; });
    const double inplace_ns = median_ns([&] {
        Tensor5 y = x;
        apply_stsm_in_place(y, spec);
        volatile double sink = y[0];
        (void)sink;
    });
    const double oracle_ns = median_ns([&] { volatile double sink = oracle_sparse_conv(x, kernel)[0]; (void)sink; });

    if (oracle_ns < copy_ns || oracle_ns < inplace_ns) {
        throw ContractError("sparse-convolution reference timed faster than a direct shift; "
                            "timings are not trustworthy");
    }

    std::ostringstream csv;
    csv << "# spec=" << format_shift_spec(spec) << "\n";
    csv << kBenchCsvHeader << "\n";
    auto row = [&](const char* impl, double ns) {
        csv << impl << "," << d.n << "," << d.c << "," << d.t << "," << d.h << "," << d.w << ","
            << static_cast<long long>(elements) << "," << cfg.bench_reps << ","
            << fmt_double(ns / elements) << "\n";
    };
    row("copy_shift", copy_ns);
    row("inplace_slab_shift", inplace_ns);
    row("oracle_sparse_conv", oracle_ns);

    const std::string text = csv.str();
    std::ofstream os(std::filesystem::path(cfg.out_dir) / "bench.csv");
    os << text;
    if (log) (*log) << text;
    return text;
}

}  // namespace stsm
