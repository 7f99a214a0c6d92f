#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "penguin/config.hpp"
#include "penguin/metrics.hpp"
#include "penguin/synth.hpp"
#include "penguin/train.hpp"
#include "penguin/waveform.hpp"

namespace penguin {

// Sorted .vsr paths under dir.
std::vector<std::string> list_vsr_files(const std::string& dir);

void write_split_manifests(const std::string& dir, const DatasetSplit& split);
DatasetSplit read_split_manifests(const std::string& dir);

struct SynthOptions {
    SynthConfig config;
    std::string out_dir;
};
void cmd_synth(const SynthOptions& opts, std::ostream& out);

struct PreprocessOptions {
    std::string in_dir;
    std::string out_dir;
    Task task = Task::ECG;
    std::string ppg_label = "ppg";
    std::string target_label; // "" = task default
    double csv_rate = 0.0;    // sample rate for delimited-text inputs
};
void cmd_preprocess(const PreprocessOptions& opts, std::ostream& out);

struct SplitOptions {
    std::string in_dir;
    std::string out_dir;
    std::array<int, 3> ratio{6, 1, 1};
    std::uint64_t seed = 0;
};
void cmd_split(const SplitOptions& opts, std::ostream& out);

struct TrainOptions {
    RunConfig config = RunConfig::defaults();
    std::string data_dir;
    std::string split_dir;
    std::string out_dir;
    int threads = 1;
};
void cmd_train(const TrainOptions& opts, std::ostream& out);

struct SampleOptions {
    std::string checkpoint;
    std::string data_dir;
    std::string split_dir; // optional; "" = all records in data_dir
    std::string subset = "test";
    std::string out_dir;
    int steps_override = 0;        // 0 = checkpoint config
    long long seed_override = -1;  // <0 = checkpoint config
    bool emit_series = false;
    int threads = 1;
};
void cmd_sample(const SampleOptions& opts, std::ostream& out);

struct EvalOptions {
    std::string pred_dir;
    std::string truth_dir;
    std::string out_dir;
    Task task = Task::ECG;
    std::string target_label; // "" = task default
};
// Aggregate reports in task order (HR | RR | SBP+DBP).
std::vector<MetricReport> cmd_eval(const EvalOptions& opts, std::ostream& out);

struct GradcheckOptions {
    std::uint64_t seed = 0;
    bool sabotage = false;
};
GradCheckReport cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);

} // namespace penguin
