// penguin: reconstruct vital-sign waveforms from PPG with a flow-matching
// model over deep state-space blocks.
//
// Subcommands: synth, preprocess, split, train, sample, eval, gradcheck.
// Exit codes: 0 ok, 2 bad arguments, 3 I/O failure, 4 schema mismatch,
// 5 training failure, 6 shape mismatch, 7 evaluation failure,
// 8 gradient-check failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "penguin/pipeline.hpp"

using namespace penguin;

namespace {

struct RatioParam {
    std::array<int, 3> ratio{6, 1, 1};
};

std::array<int, 3> parse_ratio(const std::string& text) {
    std::array<int, 3> out{};
    int part = 0;
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        std::size_t next = text.find(':', pos);
        std::string tok = next == std::string::npos ? text.substr(pos) : text.substr(pos, next - pos);
        out[static_cast<std::size_t>(i)] = std::stoi(tok);
        if (next == std::string::npos) {
            part = i;
            break;
        }
        pos = next + 1;
        part = i + 1;
    }
    if (part != 2) throw std::invalid_argument("ratio must look like a:b:c");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPG-conditioned vital-sign waveform reconstruction"};
    app.require_subcommand(1);

    // --- synth --------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate synthetic paired records");
    SynthOptions synth_opts;
    std::string synth_task = "ecg";
    long long synth_seed = 0;
    synth->add_option("--task", synth_task, "ecg | resp | abp")->capture_default_str();
    synth->add_option("--subjects", synth_opts.config.n_subjects, "number of subjects")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--seconds", synth_opts.config.seconds_per_subject, "seconds per subject")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
    synth->add_option("--fixed-hr", synth_opts.config.fixed_hr_bpm,
                      "pin the heart rate (bpm, 0 = random walk)");
    synth->add_option("--fixed-rr", synth_opts.config.fixed_rr_bpm,
                      "pin the respiratory rate (bpm, 0 = random walk)");
    synth->add_option("--fixed-sbp", synth_opts.config.fixed_sbp, "pin SBP (mmHg, 0 = random)");
    synth->add_option("--fixed-dbp", synth_opts.config.fixed_dbp, "pin DBP (mmHg, 0 = random)");
    synth->add_option("--abp-drift", synth_opts.config.abp_drift_mmhg,
                      "ABP drift amplitude in mmHg");

    // --- preprocess ---------------------------------------------------------
    auto* preprocess = app.add_subcommand("preprocess", "resample to 128 Hz and apply task filters");
    PreprocessOptions pre_opts;
    std::string pre_task = "ecg";
    preprocess->add_option("--in", pre_opts.in_dir, "input directory (.vsr or .csv)")->required();
    preprocess->add_option("--out", pre_opts.out_dir, "output directory")->required();
    preprocess->add_option("--task", pre_task, "ecg | resp | abp")->capture_default_str();
    preprocess->add_option("--ppg-label", pre_opts.ppg_label, "PPG channel label")
        ->capture_default_str();
    preprocess->add_option("--target-label", pre_opts.target_label,
                           "target channel label (default: task name)");
    preprocess->add_option("--csv-rate", pre_opts.csv_rate,
                           "sample rate of delimited-text inputs");

    // --- split --------------------------------------------------------------
    auto* split = app.add_subcommand("split", "subject-disjoint train/val/test manifests");
    SplitOptions split_opts;
    std::string ratio_text = "6:1:1";
    long long split_seed = 0;
    split->add_option("--in", split_opts.in_dir, "directory of .vsr records")->required();
    split->add_option("--out", split_opts.out_dir, "manifest output directory")->required();
    split->add_option("--ratio", ratio_text, "train:val:test ratio")->capture_default_str();
    split->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();

    // --- train --------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the velocity network");
    TrainOptions train_opts;
    std::string train_config_path;
    std::vector<std::string> train_sets;
    train_cmd->add_option("--data", train_opts.data_dir, "preprocessed record directory")
        ->required();
    train_cmd->add_option("--splits", train_opts.split_dir, "split manifest directory")->required();
    train_cmd->add_option("--out", train_opts.out_dir, "output directory")->required();
    train_cmd->add_option("--config", train_config_path, "config file (key = value lines)");
    train_cmd->add_option("--set", train_sets, "override config entries (key=value)");
    train_cmd->add_option("--threads", train_opts.threads, "worker threads (1 = reproducible)")
        ->capture_default_str();

    // --- sample -------------------------------------------------------------
    auto* sample = app.add_subcommand("sample", "reconstruct vital signs from PPG");
    SampleOptions sample_opts;
    sample->add_option("--checkpoint", sample_opts.checkpoint, "PGW1 checkpoint")->required();
    sample->add_option("--data", sample_opts.data_dir, "preprocessed record directory")->required();
    sample->add_option("--splits", sample_opts.split_dir, "split manifest directory (optional)");
    sample->add_option("--subset", sample_opts.subset, "train | val | test | all")
        ->capture_default_str();
    sample->add_option("--out", sample_opts.out_dir, "output directory")->required();
    sample->add_option("--steps", sample_opts.steps_override, "sampling steps (0 = config)");
    sample->add_option("--seed", sample_opts.seed_override, "sampling seed (<0 = config)");
    sample->add_flag("--series", sample_opts.emit_series, "emit plot-ready time,value series");
    sample->add_option("--threads", sample_opts.threads, "worker threads (1 = reproducible)")
        ->capture_default_str();

    // --- eval ---------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "task metrics between reconstruction and truth");
    EvalOptions eval_opts;
    std::string eval_task = "ecg";
    eval->add_option("--pred", eval_opts.pred_dir, "reconstruction directory")->required();
    eval->add_option("--truth", eval_opts.truth_dir, "ground-truth directory")->required();
    eval->add_option("--out", eval_opts.out_dir, "report output directory")->required();
    eval->add_option("--task", eval_task, "ecg | resp | abp")->capture_default_str();
    eval->add_option("--target-label", eval_opts.target_label,
                     "truth channel label (default: task name)");

    // --- gradcheck ----------------------------------------------------------
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    GradcheckOptions gc_opts;
    long long gc_seed = 0;
    gradcheck->add_option("--seed", gc_seed, "probe seed")->capture_default_str();
    gradcheck->add_flag("--sabotage", gc_opts.sabotage, "negative control: corrupt one family")
        ->group(""); // hidden test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) {
            synth_opts.config.task = task_from_name(synth_task);
            synth_opts.config.seed = static_cast<std::uint64_t>(synth_seed);
            cmd_synth(synth_opts, std::cout);
        } else if (*preprocess) {
            pre_opts.task = task_from_name(pre_task);
            cmd_preprocess(pre_opts, std::cout);
        } else if (*split) {
            split_opts.ratio = parse_ratio(ratio_text);
            split_opts.seed = static_cast<std::uint64_t>(split_seed);
            cmd_split(split_opts, std::cout);
        } else if (*train_cmd) {
            RunConfig rc = train_config_path.empty() ? RunConfig::defaults()
                                                     : RunConfig::from_file(train_config_path);
            for (const auto& kv : train_sets) rc.set_kv(kv);
            train_opts.config = rc;
            std::cout << "effective config:\n" << rc.serialize();
            cmd_train(train_opts, std::cout);
        } else if (*sample) {
            cmd_sample(sample_opts, std::cout);
        } else if (*eval) {
            eval_opts.task = task_from_name(eval_task);
            cmd_eval(eval_opts, std::cout);
        } else if (*gradcheck) {
            gc_opts.seed = static_cast<std::uint64_t>(gc_seed);
            GradCheckReport report = cmd_gradcheck(gc_opts, std::cout);
            if (!report.pass) {
                std::cerr << "gradcheck failed: worst coordinate " << report.worst.param << "["
                          << report.worst.index << "] rel_err=" << report.worst.rel_err << "\n";
                return 8;
            }
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 6;
    } catch (const EvalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 7;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
