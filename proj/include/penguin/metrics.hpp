#pragma once

#include <string>
#include <utility>
#include <vector>

#include "penguin/waveform.hpp"

namespace penguin {

struct MetricReport {
    std::string metric_name; // "HR Error", "RR Error", "SBP Error", "DBP Error"
    std::string unit;        // "bpm" or "mmHg"

    struct WindowRow {
        int window_index = 0;
        double predicted = 0.0;
        double truth = 0.0;
        double abs_error = 0.0;
    };
    std::vector<WindowRow> per_window;
    std::vector<std::pair<int, std::string>> skipped; // window index, reason

    int n_windows_total = 0;
    int n_windows_valid = 0;
    int n_windows_skipped = 0;
    double mae = 0.0;
    bool has_value = false; // false when every window was skipped
};

// Hamilton-style QRS detection: 8-16 Hz bandpass, differentiate, rectify,
// 80 ms moving-average envelope, adaptive threshold at 0.45x the mean of
// the last 8 accepted peak amplitudes (seeded by the global envelope mean),
// 200 ms refractory, peak position refined to the ECG maximum within 40 ms.
std::vector<std::size_t> detect_r_peaks(const std::vector<double>& ecg, double fs);

// Per non-overlapping window, HR = 60 * n_intervals / (sum of RR in s)
// from peaks inside the window; windows with < 2 peaks on either side are
// skipped and counted.
MetricReport hr_error(const std::vector<double>& pred_ecg, const std::vector<double>& true_ecg,
                      double fs, double window_s = 8.0);

// Per non-overlapping window: mean removal, Hann taper, FFT, dominant bin
// in [0.05, 1.0] Hz with parabolic interpolation; RR = 60 f*.
MetricReport rr_error(const std::vector<double>& pred_resp, const std::vector<double>& true_resp,
                      double fs, double window_s = 60.0);

// SBP = per-window max, DBP = per-window min, MAE in mmHg.
std::pair<MetricReport, MetricReport> bp_error(const std::vector<double>& pred_abp,
                                               const std::vector<double>& true_abp, double fs,
                                               double window_s = 8.0);

// Per-window rows as comma-separated text with skip annotations.
std::string report_to_csv(const MetricReport& report);

// e.g. "HR Error [bpm]: 12.003 (10 windows, 0 skipped)"
std::string summary_line(const MetricReport& report);

// Merge same-metric reports (per-subject -> aggregate); window indices are
// renumbered sequentially.
MetricReport merge_reports(const std::vector<MetricReport>& reports);

} // namespace penguin
