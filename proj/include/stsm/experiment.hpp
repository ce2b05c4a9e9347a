#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stsm/autodiff.hpp"
#include "stsm/network.hpp"
#include "stsm/synth.hpp"

namespace stsm {

// Flat key=value experiment description; '#' starts a comment. Every value
// is validated at parse time and errors carry the offending line number.
struct ExperimentConfig {
    std::string preset = "tiny";
    ShiftPattern spec;  // defaults to pattern=T+H+W f=3/8
    int epochs = 30;
    int batch_size = 32;
    double lr = 0.05;
    std::vector<int> lr_decay_epochs = {15, 25};
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int train_samples = 800;
    int eval_samples = 200;
    MotionTask task;
    std::string out_dir = "runs/out";

    std::vector<Fraction> alphas;        // sweep-alpha
    std::vector<std::string> patterns;   // sweep-pattern
    std::optional<Dims5> input_dims;     // cost; defaults to (1, C, T, H, W) of the task
    Dims5 bench_dims{2, 32, 8, 32, 32};  // bench-shift
    int bench_reps = 5;

    Dims5 default_input_dims() const {
        return input_dims.value_or(
            Dims5{1, task.channels, task.frames, task.height, task.width});
    }
};

ExperimentConfig parse_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config_text(const std::string& text, const std::string& origin);

// Echo of the effective configuration, one canonical key=value per line.
std::vector<std::string> config_echo(const ExperimentConfig& cfg);

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double eval_accuracy = 0.0;
    double seconds = 0.0;  // wall time; reported separately from the CSV
};

struct RunRecord {
    std::vector<EpochRow> epochs;
    double final_accuracy = 0.0;
    CostReport cost;
    std::vector<std::string> echo;
};

// Exclusive-writer guard on an output directory; removed on destruction.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path lock_path_;
    bool owned_ = false;
};

struct TrainedModel {
    LayerGraph graph;
    ParamStore params;
};

// Trains on freshly generated motion data (train and eval streams use
// disjoint seeds) and evaluates after every epoch. `spec` overrides the
// config's shift pattern, `seed` its seed. Progress goes to `log` if given.
RunRecord train_and_eval(const ExperimentConfig& cfg, const ShiftPattern& spec, std::uint64_t seed,
                         TrainedModel* model_out = nullptr, std::ostream* log = nullptr);

double evaluate_accuracy(const LayerGraph& g, ParamStore& params,
                         const std::vector<ClipSample>& samples, int batch_size = 64);

// Statistics over the adjacent reversal pairs of the two given classes.
struct PairEvalResult {
    int pairs = 0;
    double subtask_accuracy = 0.0;  // over the clips of those two classes
    double max_logit_gap = 0.0;     // max over pairs of max |logit delta|
    bool logits_all_equal = false;
};
PairEvalResult evaluate_reversal_pairs(const LayerGraph& g, ParamStore& params,
                                       const std::vector<ClipSample>& samples, Motion fwd,
                                       Motion rev);

// CSV column schemas, fixed and asserted by tests.
extern const char* const kRunCsvHeader;      // epoch,train_loss,eval_accuracy
extern const char* const kAlphaCsvHeader;    // f,accuracy,mults_adds,parameters
extern const char* const kPatternCsvHeader;  // pattern,accuracy,mults_adds,parameters
extern const char* const kBenchCsvHeader;    // impl,n,c,t,h,w,elements,reps,ns_per_element

// CLI entry points. Each writes its artifacts under cfg.out_dir and returns
// the primary record. `log` receives one-line progress messages.
RunRecord cmd_train(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::string cmd_sweep_alpha(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::string cmd_sweep_pattern(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::string cmd_cost(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::string cmd_bench_shift(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace stsm
