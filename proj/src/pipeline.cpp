#include "penguin/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "penguin/dsp.hpp"

namespace fs = std::filesystem;

namespace penguin {

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failure on '" + path + "'");
}

std::string comment_block(const std::string& text) {
    std::string out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        out += "# " + text.substr(start, end - start) + "\n";
        start = end + 1;
    }
    return out;
}

std::map<std::string, WaveformRecord> load_records_by_subject(const std::string& dir) {
    std::map<std::string, WaveformRecord> records;
    for (const auto& path : list_vsr_files(dir)) {
        WaveformRecord rec = read_record(path);
        if (!records.emplace(rec.subject_id, std::move(rec)).second)
            throw FormatError(dir + ": duplicate subject id in '" + path + "'");
    }
    if (records.empty()) throw IoError("no .vsr records found in '" + dir + "'");
    return records;
}

std::vector<std::string> subset_subjects(const DatasetSplit& split, const std::string& subset) {
    if (subset == "train") return split.train_subjects;
    if (subset == "val") return split.val_subjects;
    if (subset == "test") return split.test_subjects;
    if (subset == "all") {
        std::vector<std::string> all = split.train_subjects;
        all.insert(all.end(), split.val_subjects.begin(), split.val_subjects.end());
        all.insert(all.end(), split.test_subjects.begin(), split.test_subjects.end());
        return all;
    }
    throw std::invalid_argument("unknown subset '" + subset + "' (train|val|test|all)");
}

std::vector<double> to_f64(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace

std::vector<std::string> list_vsr_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".vsr")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

void write_split_manifests(const std::string& dir, const DatasetSplit& split) {
    ensure_dir(dir);
    auto dump = [&](const std::string& name, const std::vector<std::string>& ids) {
        std::string text;
        for (const auto& id : ids) text += id + "\n";
        write_text(dir + "/" + name, text);
    };
    dump("train.txt", split.train_subjects);
    dump("val.txt", split.val_subjects);
    dump("test.txt", split.test_subjects);
}

DatasetSplit read_split_manifests(const std::string& dir) {
    auto load = [&](const std::string& name) {
        std::ifstream in(dir + "/" + name);
        if (!in) throw IoError("cannot open split manifest '" + dir + "/" + name + "'");
        std::vector<std::string> ids;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) ids.push_back(line);
        }
        return ids;
    };
    DatasetSplit split;
    split.train_subjects = load("train.txt");
    split.val_subjects = load("val.txt");
    split.test_subjects = load("test.txt");
    return split;
}

void cmd_synth(const SynthOptions& opts, std::ostream& out) {
    opts.config.validate();
    ensure_dir(opts.out_dir);
    for (int i = 0; i < opts.config.n_subjects; ++i) {
        WaveformRecord rec = generate(opts.config, i);
        std::string path = opts.out_dir + "/subject_" + std::to_string(i) + ".vsr";
        write_record(rec, path);
        out << rec.subject_id << ": task=" << task_name(rec.task) << " channels=";
        for (std::size_t c = 0; c < rec.channels.size(); ++c)
            out << (c ? "," : "") << rec.channels[c].label;
        out << " samples=" << rec.n_samples() << " ("
            << rec.n_samples() / rec.sample_rate_hz << " s)\n";
    }
}

void cmd_preprocess(const PreprocessOptions& opts, std::ostream& out) {
    if (!fs::is_directory(opts.in_dir)) throw IoError("'" + opts.in_dir + "' is not a directory");
    ensure_dir(opts.out_dir);
    std::string target_label =
        opts.target_label.empty() ? task_target_label(opts.task) : opts.target_label;

    std::vector<std::string> inputs;
    for (const auto& entry : fs::directory_iterator(opts.in_dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension();
        if (ext == ".vsr" || ext == ".csv") inputs.push_back(entry.path().string());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw IoError("no .vsr or .csv inputs in '" + opts.in_dir + "'");

    for (const auto& path : inputs) {
        WaveformRecord rec;
        if (fs::path(path).extension() == ".csv") {
            if (!(opts.csv_rate > 0.0))
                throw std::invalid_argument("delimited-text input requires --csv-rate");
            rec = read_delimited_text(path, opts.csv_rate, {opts.ppg_label, target_label},
                                      fs::path(path).stem().string(), opts.task);
        } else {
            rec = read_record(path);
        }

        if (!rec.find_channel(opts.ppg_label))
            throw SchemaError(path + ": missing PPG channel '" + opts.ppg_label + "'");
        if (!rec.find_channel(target_label))
            throw SchemaError(path + ": missing target channel '" + target_label + "'");

        if (rec.sample_rate_hz != 128.0) {
            for (auto& ch : rec.channels) {
                std::vector<double> resampled = resample(to_f64(ch.samples), rec.sample_rate_hz, 128.0);
                ch.samples.assign(resampled.begin(), resampled.end());
            }
            rec.sample_rate_hz = 128.0;
        }

        rec = preprocess_task(rec, opts.ppg_label, ChannelRole::PPG);
        rec = preprocess_task(rec, target_label, role_from_task(opts.task));
        rec.task = opts.task;

        std::string out_path = opts.out_dir + "/" + fs::path(path).stem().string() + ".vsr";
        write_record(rec, out_path);
        out << rec.subject_id << ": preprocessed " << rec.n_samples() << " samples -> " << out_path
            << "\n";
    }
}

void cmd_split(const SplitOptions& opts, std::ostream& out) {
    std::vector<std::string> subjects;
    for (const auto& path : list_vsr_files(opts.in_dir))
        subjects.push_back(read_record(path).subject_id);
    std::sort(subjects.begin(), subjects.end());

    DatasetSplit split = split_subjects(subjects, opts.ratio, opts.seed);
    write_split_manifests(opts.out_dir, split);
    out << "split " << subjects.size() << " subjects -> train=" << split.train_subjects.size()
        << " val=" << split.val_subjects.size() << " test=" << split.test_subjects.size() << "\n";
}

namespace {

std::vector<WindowPair> collect_pairs(const std::map<std::string, WaveformRecord>& records,
                                      const std::vector<std::string>& subjects,
                                      const std::string& ppg_label, const std::string& target_label,
                                      std::size_t k, std::size_t stride) {
    std::vector<WindowPair> pairs;
    for (const auto& id : subjects) {
        auto it = records.find(id);
        if (it == records.end())
            throw EvalError("subject '" + id + "' listed in the split but missing from the data");
        auto w = window_pairs(it->second, ppg_label, target_label, k, stride);
        pairs.insert(pairs.end(), std::make_move_iterator(w.begin()),
                     std::make_move_iterator(w.end()));
    }
    return pairs;
}

} // namespace

void cmd_train(const TrainOptions& opts, std::ostream& out) {
    const RunConfig& rc = opts.config;
    ModelConfig mc = rc.model_config();
    TrainConfig tc = rc.train_config();
    tc.threads = opts.threads;

    auto records = load_records_by_subject(opts.data_dir);
    DatasetSplit split = read_split_manifests(opts.split_dir);

    std::size_t k = static_cast<std::size_t>(mc.window);
    std::size_t train_stride =
        rc.data_stride() > 0 ? static_cast<std::size_t>(rc.data_stride()) : std::max<std::size_t>(1, k / 2);
    std::string ppg_label = rc.data_ppg_label();
    std::string target_label = rc.data_target_label();

    auto train_pairs =
        collect_pairs(records, split.train_subjects, ppg_label, target_label, k, train_stride);
    auto val_pairs = collect_pairs(records, split.val_subjects, ppg_label, target_label, k, k);
    out << "train windows=" << train_pairs.size() << " val windows=" << val_pairs.size() << "\n";

    PenguinModel<float> model = build_model<float>(mc, mix_seed(tc.seed, 0x10DE1ULL));
    TrainResult<float> result =
        train(model, train_pairs, val_pairs, tc, [&](const EpochStats& e) {
            char line[160];
            std::snprintf(line, sizeof(line),
                          "epoch %d: train_loss=%.6f val_loss=%.6f (%.1fs)\n", e.epoch,
                          e.train_loss, e.val_loss, e.seconds);
            out << line;
        });

    ensure_dir(opts.out_dir);
    std::string config_text = rc.serialize();
    ParamStore<float> best = std::move(result.best_params);
    save_checkpoint(opts.out_dir + "/checkpoint.pgw", best, config_text);
    write_text(opts.out_dir + "/history.csv",
               comment_block(config_text) + history_to_csv(result.history));
    out << "best epoch " << result.best_epoch << " (val_loss=" << result.best_val << "), wrote "
        << opts.out_dir << "/checkpoint.pgw\n";
}

void cmd_sample(const SampleOptions& opts, std::ostream& out) {
    auto [params, config_text] = load_checkpoint(opts.checkpoint);
    RunConfig rc = RunConfig::from_text(config_text, opts.checkpoint + "#config");
    ModelConfig mc = rc.model_config();

    PenguinModel<float> model;
    model.cfg = mc;
    model.params = std::move(params);

    SamplerConfig sc = rc.sampler_config();
    if (opts.steps_override > 0) sc.steps = opts.steps_override;
    if (opts.seed_override >= 0) sc.seed = static_cast<std::uint64_t>(opts.seed_override);
    out << "sampling steps: " << sc.steps << " (seed " << sc.seed << ")\n";

    auto records = load_records_by_subject(opts.data_dir);
    std::vector<std::string> subjects;
    if (opts.split_dir.empty()) {
        for (const auto& [id, rec] : records) subjects.push_back(id);
    } else {
        subjects = subset_subjects(read_split_manifests(opts.split_dir), opts.subset);
    }

    std::size_t k = static_cast<std::size_t>(mc.window);
    std::string ppg_label = rc.data_ppg_label();
    ensure_dir(opts.out_dir);
    write_text(opts.out_dir + "/sample_config.txt", rc.serialize());

    VelocityFn<float> velocity = make_velocity(model);
    for (const auto& id : subjects) {
        auto it = records.find(id);
        if (it == records.end())
            throw EvalError("subject '" + id + "' listed in the split but missing from the data");
        const WaveformRecord& rec = it->second;
        const Channel* ppg = rec.find_channel(ppg_label);
        if (!ppg) throw SchemaError(rec.subject_id + ": missing PPG channel '" + ppg_label + "'");
        if (rec.n_samples() < k)
            throw ShapeError(rec.subject_id + ": record shorter than the checkpoint window K=" +
                             std::to_string(k));

        std::size_t n_windows = rec.n_samples() / k;
        std::vector<std::vector<float>> windows(n_windows);
        for (std::size_t w = 0; w < n_windows; ++w)
            windows[w].assign(ppg->samples.begin() + static_cast<std::ptrdiff_t>(w * k),
                              ppg->samples.begin() + static_cast<std::ptrdiff_t>((w + 1) * k));

        SamplerConfig subject_sc = sc;
        subject_sc.seed = mix_seed(sc.seed, fnv1a64(id));
        auto recon_windows = reconstruct_windows(velocity, windows, subject_sc, opts.threads);

        std::vector<float> recon;
        recon.reserve(n_windows * k);
        for (const auto& w : recon_windows) recon.insert(recon.end(), w.begin(), w.end());

        WaveformRecord out_rec;
        out_rec.subject_id = rec.subject_id;
        out_rec.task = rec.task;
        out_rec.sample_rate_hz = rec.sample_rate_hz;
        out_rec.channels.push_back({"recon", recon});
        std::string path = opts.out_dir + "/" + rec.subject_id + ".vsr";
        write_record(out_rec, path);
        out << rec.subject_id << ": reconstructed " << n_windows << " windows -> " << path << "\n";

        if (opts.emit_series) {
            std::string series = comment_block(rc.serialize()) + "time_s,value\n";
            char line[64];
            for (std::size_t i = 0; i < recon.size(); ++i) {
                std::snprintf(line, sizeof(line), "%.6f,%.9g\n",
                              static_cast<double>(i) / rec.sample_rate_hz,
                              static_cast<double>(recon[i]));
                series += line;
            }
            write_text(opts.out_dir + "/" + rec.subject_id + "_series.csv", series);
        }
    }
}

std::vector<MetricReport> cmd_eval(const EvalOptions& opts, std::ostream& out) {
    auto preds = load_records_by_subject(opts.pred_dir);
    auto truths = load_records_by_subject(opts.truth_dir);
    std::string target_label =
        opts.target_label.empty() ? task_target_label(opts.task) : opts.target_label;

    std::vector<std::string> missing;
    for (const auto& [id, rec] : preds)
        if (!truths.count(id)) missing.push_back(id);
    if (!missing.empty()) {
        std::string msg = "subjects missing from truth:";
        for (const auto& id : missing) msg += " " + id;
        throw EvalError(msg);
    }

    std::vector<MetricReport> hr_or_rr;
    std::vector<MetricReport> sbp, dbp;
    for (const auto& [id, pred_rec] : preds) {
        const WaveformRecord& truth_rec = truths.at(id);
        const Channel* pred_ch = pred_rec.find_channel("recon");
        if (!pred_ch) pred_ch = pred_rec.find_channel(target_label);
        const Channel* truth_ch = truth_rec.find_channel(target_label);
        if (!pred_ch) throw SchemaError(id + ": prediction has no 'recon' channel");
        if (!truth_ch) throw SchemaError(id + ": truth has no '" + target_label + "' channel");

        std::size_t n = std::min(pred_ch->samples.size(), truth_ch->samples.size());
        std::vector<double> pred(pred_ch->samples.begin(),
                                 pred_ch->samples.begin() + static_cast<std::ptrdiff_t>(n));
        std::vector<double> truth(truth_ch->samples.begin(),
                                  truth_ch->samples.begin() + static_cast<std::ptrdiff_t>(n));
        double fs = truth_rec.sample_rate_hz;

        switch (opts.task) {
            case Task::ECG: hr_or_rr.push_back(hr_error(pred, truth, fs)); break;
            case Task::RESP: hr_or_rr.push_back(rr_error(pred, truth, fs)); break;
            case Task::ABP: {
                auto [s, d] = bp_error(pred, truth, fs);
                sbp.push_back(std::move(s));
                dbp.push_back(std::move(d));
                break;
            }
        }
    }

    std::vector<MetricReport> aggregates;
    if (opts.task == Task::ABP) {
        aggregates.push_back(merge_reports(sbp));
        aggregates.push_back(merge_reports(dbp));
    } else {
        aggregates.push_back(merge_reports(hr_or_rr));
    }

    ensure_dir(opts.out_dir);
    std::string header = "# task = " + task_name(opts.task) + "\n# pred_dir = " + opts.pred_dir +
                         "\n# truth_dir = " + opts.truth_dir + "\n";
    std::string report_text = header;
    for (const auto& rep : aggregates) {
        report_text += "# " + summary_line(rep) + "\n";
        report_text += report_to_csv(rep);
    }
    write_text(opts.out_dir + "/report.csv", report_text);

    bool any_valid = false;
    for (const auto& rep : aggregates) {
        out << summary_line(rep) << "\n";
        any_valid = any_valid || rep.has_value;
    }
    if (!any_valid) throw EvalError("no valid windows in any report");
    return aggregates;
}

GradCheckReport cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
    GradCheckReport report = gradcheck_tiny_model(opts.seed, opts.sabotage);
    out << "finite-difference gradient check (64-bit, tiny model, seed " << opts.seed << ")\n";
    char line[160];
    for (const auto& [family, max_rel] : report.family_max) {
        std::snprintf(line, sizeof(line), "  %-10s max_rel_err=%.3e\n", family.c_str(), max_rel);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%zu probes, worst %.3e at %s[%zu]\n", report.probes.size(),
                  report.worst.rel_err, report.worst.param.c_str(), report.worst.index);
    out << line;
    out << (report.pass ? "PASS" : "FAIL") << " (tolerance 1e-3)\n";
    return report;
}

} // namespace penguin
