#include "penguin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>

#include "penguin/dsp.hpp"

namespace penguin {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT, in place.
void fft_pow2(std::vector<std::complex<double>>& a) {
    std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * kPi / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Dominant frequency of one window in [f_lo, f_hi] Hz: mean removal, Hann
// taper, zero-padded FFT, parabolic interpolation around the peak bin.
double dominant_frequency(const double* x, std::size_t n, double fs, double f_lo, double f_hi) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);

    std::size_t nfft = 1;
    while (nfft < n) nfft <<= 1;
    std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
        double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                        static_cast<double>(n - 1));
        buf[i] = std::complex<double>((x[i] - mean) * w, 0.0);
    }
    fft_pow2(buf);

    double bin_hz = fs / static_cast<double>(nfft);
    std::size_t lo = static_cast<std::size_t>(std::ceil(f_lo / bin_hz));
    std::size_t hi = static_cast<std::size_t>(std::floor(f_hi / bin_hz));
    hi = std::min(hi, nfft / 2);
    lo = std::max<std::size_t>(lo, 1);
    if (lo > hi) return 0.0;

    std::size_t best = lo;
    double best_mag = 0.0;
    for (std::size_t b = lo; b <= hi; ++b) {
        double m = std::abs(buf[b]);
        if (m > best_mag) {
            best_mag = m;
            best = b;
        }
    }

    double freq = static_cast<double>(best) * bin_hz;
    if (best > 0 && best < nfft / 2) {
        double m0 = std::abs(buf[best - 1]);
        double m1 = best_mag;
        double m2 = std::abs(buf[best + 1]);
        double denom = m0 - 2.0 * m1 + m2;
        if (std::abs(denom) > 1e-12) {
            double delta = 0.5 * (m0 - m2) / denom;
            delta = std::clamp(delta, -0.5, 0.5);
            freq = (static_cast<double>(best) + delta) * bin_hz;
        }
    }
    return freq;
}

void finalize(MetricReport& report) {
    report.n_windows_valid = static_cast<int>(report.per_window.size());
    report.n_windows_skipped = static_cast<int>(report.skipped.size());
    report.n_windows_total = report.n_windows_valid + report.n_windows_skipped;
    if (report.n_windows_valid > 0) {
        double acc = 0.0;
        for (const auto& row : report.per_window) acc += row.abs_error;
        report.mae = acc / static_cast<double>(report.n_windows_valid);
        report.has_value = true;
    } else {
        report.mae = std::numeric_limits<double>::quiet_NaN();
        report.has_value = false;
    }
}

} // namespace

std::vector<std::size_t> detect_r_peaks(const std::vector<double>& ecg, double fs) {
    if (fs < 100.0) throw std::invalid_argument("detect_r_peaks: fs must be >= 100 Hz");
    if (static_cast<double>(ecg.size()) < 2.0 * fs)
        throw std::invalid_argument("detect_r_peaks: need at least 2 s of signal");

    FilterSpec spec;
    spec.kind = FilterKind::Bandpass;
    spec.low_hz = 8.0;
    spec.high_hz = 16.0;
    spec.order = 4;
    BiquadCascade cascade = design_butterworth(spec, fs);
    std::vector<double> filtered = apply_filter(cascade, ecg, true);

    // Differentiate and rectify.
    std::vector<double> env(ecg.size(), 0.0);
    for (std::size_t i = 1; i < filtered.size(); ++i)
        env[i] = std::abs(filtered[i] - filtered[i - 1]);

    // 80 ms centered moving average.
    int half = std::max(1, static_cast<int>(std::lround(0.08 * fs)) / 2);
    std::vector<double> smooth(env.size(), 0.0);
    {
        // prefix sums for O(n) averaging
        std::vector<double> prefix(env.size() + 1, 0.0);
        for (std::size_t i = 0; i < env.size(); ++i) prefix[i + 1] = prefix[i] + env[i];
        for (std::size_t i = 0; i < env.size(); ++i) {
            std::size_t a = i >= static_cast<std::size_t>(half) ? i - static_cast<std::size_t>(half) : 0;
            std::size_t b = std::min(env.size() - 1, i + static_cast<std::size_t>(half));
            smooth[i] = (prefix[b + 1] - prefix[a]) / static_cast<double>(b - a + 1);
        }
    }

    double global_mean =
        std::accumulate(smooth.begin(), smooth.end(), 0.0) / static_cast<double>(smooth.size());

    const std::size_t refractory = static_cast<std::size_t>(std::lround(0.2 * fs));
    const std::size_t refine_half = static_cast<std::size_t>(std::lround(0.04 * fs));

    // A candidate is a local maximum that is not dwarfed inside its own
    // refractory neighborhood. Filter ringing puts side bumps around each
    // QRS that a bare local-max scan would accept ahead of the QRS itself;
    // genuine neighboring beats have comparable heights and are left to the
    // time-ordered refractory rule.
    auto is_candidate = [&](std::size_t i) {
        if (!(smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1])) return false;
        if (!(smooth[i] > 0.0)) return false;
        std::size_t a = i >= refractory ? i - refractory : 0;
        std::size_t b = std::min(smooth.size() - 1, i + refractory);
        for (std::size_t j = a; j <= b; ++j)
            if (smooth[j] >= 2.0 * smooth[i]) return false;
        return true;
    };

    std::deque<double> history{global_mean}; // seeds the adaptive threshold
    std::vector<std::size_t> peaks;
    std::ptrdiff_t last_accept = -static_cast<std::ptrdiff_t>(refractory) - 1;

    for (std::size_t i = 1; i + 1 < smooth.size(); ++i) {
        if (!is_candidate(i)) continue;
        double threshold = 0.45 * (std::accumulate(history.begin(), history.end(), 0.0) /
                                   static_cast<double>(history.size()));
        if (!(smooth[i] > threshold)) continue;
        if (static_cast<std::ptrdiff_t>(i) - last_accept < static_cast<std::ptrdiff_t>(refractory))
            continue;

        last_accept = static_cast<std::ptrdiff_t>(i);
        history.push_back(smooth[i]);
        if (history.size() > 8) history.pop_front();

        // Refine to the raw-ECG maximum nearby.
        std::size_t a = i >= refine_half ? i - refine_half : 0;
        std::size_t b = std::min(ecg.size() - 1, i + refine_half);
        std::size_t best = a;
        for (std::size_t j = a + 1; j <= b; ++j)
            if (ecg[j] > ecg[best]) best = j;
        peaks.push_back(best);
    }
    return peaks;
}

MetricReport hr_error(const std::vector<double>& pred_ecg, const std::vector<double>& true_ecg,
                      double fs, double window_s) {
    if (pred_ecg.size() != true_ecg.size())
        throw std::invalid_argument("hr_error: length mismatch");
    MetricReport report;
    report.metric_name = "HR Error";
    report.unit = "bpm";

    std::vector<std::size_t> pred_peaks = detect_r_peaks(pred_ecg, fs);
    std::vector<std::size_t> true_peaks = detect_r_peaks(true_ecg, fs);

    std::size_t w_len = static_cast<std::size_t>(std::lround(window_s * fs));
    std::size_t n_windows = pred_ecg.size() / w_len;

    auto window_hr = [&](const std::vector<std::size_t>& peaks, std::size_t lo, std::size_t hi,
                         double& hr_out) {
        auto first = std::lower_bound(peaks.begin(), peaks.end(), lo);
        auto last = std::lower_bound(peaks.begin(), peaks.end(), hi);
        std::size_t count = static_cast<std::size_t>(last - first);
        if (count < 2) return false;
        double span_s = static_cast<double>(*(last - 1) - *first) / fs;
        hr_out = 60.0 * static_cast<double>(count - 1) / span_s;
        return true;
    };

    for (std::size_t w = 0; w < n_windows; ++w) {
        std::size_t lo = w * w_len, hi = lo + w_len;
        double hr_pred = 0.0, hr_true = 0.0;
        bool ok_pred = window_hr(pred_peaks, lo, hi, hr_pred);
        bool ok_true = window_hr(true_peaks, lo, hi, hr_true);
        if (!ok_pred || !ok_true) {
            std::string reason = !ok_true ? "fewer than 2 peaks in truth"
                                          : "fewer than 2 peaks in prediction";
            report.skipped.emplace_back(static_cast<int>(w), reason);
            continue;
        }
        report.per_window.push_back(
            {static_cast<int>(w), hr_pred, hr_true, std::abs(hr_pred - hr_true)});
    }
    finalize(report);
    return report;
}

MetricReport rr_error(const std::vector<double>& pred_resp, const std::vector<double>& true_resp,
                      double fs, double window_s) {
    if (pred_resp.size() != true_resp.size())
        throw std::invalid_argument("rr_error: length mismatch");
    std::size_t w_len = static_cast<std::size_t>(std::lround(window_s * fs));
    std::size_t n_windows = pred_resp.size() / w_len;
    if (n_windows == 0)
        throw std::invalid_argument("rr_error: signal shorter than one window (" +
                                    std::to_string(w_len) + " samples)");

    MetricReport report;
    report.metric_name = "RR Error";
    report.unit = "bpm";
    for (std::size_t w = 0; w < n_windows; ++w) {
        const double* p = pred_resp.data() + w * w_len;
        const double* t = true_resp.data() + w * w_len;
        double f_pred = dominant_frequency(p, w_len, fs, 0.05, 1.0);
        double f_true = dominant_frequency(t, w_len, fs, 0.05, 1.0);
        double rr_pred = 60.0 * f_pred;
        double rr_true = 60.0 * f_true;
        report.per_window.push_back(
            {static_cast<int>(w), rr_pred, rr_true, std::abs(rr_pred - rr_true)});
    }
    finalize(report);
    return report;
}

std::pair<MetricReport, MetricReport> bp_error(const std::vector<double>& pred_abp,
                                               const std::vector<double>& true_abp, double fs,
                                               double window_s) {
    if (pred_abp.size() != true_abp.size())
        throw std::invalid_argument("bp_error: length mismatch");
    std::size_t w_len = static_cast<std::size_t>(std::lround(window_s * fs));
    std::size_t n_windows = pred_abp.size() / w_len;
    if (n_windows == 0)
        throw std::invalid_argument("bp_error: signal shorter than one window");

    MetricReport sbp, dbp;
    sbp.metric_name = "SBP Error";
    sbp.unit = "mmHg";
    dbp.metric_name = "DBP Error";
    dbp.unit = "mmHg";

    for (std::size_t w = 0; w < n_windows; ++w) {
        std::size_t lo = w * w_len, hi = lo + w_len;
        auto minmax_p = std::minmax_element(pred_abp.begin() + lo, pred_abp.begin() + hi);
        auto minmax_t = std::minmax_element(true_abp.begin() + lo, true_abp.begin() + hi);
        double sbp_p = *minmax_p.second, sbp_t = *minmax_t.second;
        double dbp_p = *minmax_p.first, dbp_t = *minmax_t.first;
        sbp.per_window.push_back({static_cast<int>(w), sbp_p, sbp_t, std::abs(sbp_p - sbp_t)});
        dbp.per_window.push_back({static_cast<int>(w), dbp_p, dbp_t, std::abs(dbp_p - dbp_t)});
    }
    finalize(sbp);
    finalize(dbp);
    return {std::move(sbp), std::move(dbp)};
}

std::string report_to_csv(const MetricReport& report) {
    std::string out = "window,predicted,truth,abs_error\n";
    char line[160];
    for (const auto& row : report.per_window) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", row.window_index, row.predicted,
                      row.truth, row.abs_error);
        out += line;
    }
    for (const auto& [idx, reason] : report.skipped) {
        std::snprintf(line, sizeof(line), "# skipped window %d: %s\n", idx, reason.c_str());
        out += line;
    }
    return out;
}

std::string summary_line(const MetricReport& report) {
    char line[200];
    if (report.has_value) {
        std::snprintf(line, sizeof(line), "%s [%s]: %.4f (%d windows, %d skipped)",
                      report.metric_name.c_str(), report.unit.c_str(), report.mae,
                      report.n_windows_valid, report.n_windows_skipped);
    } else {
        std::snprintf(line, sizeof(line), "%s [%s]: no valid windows (%d skipped)",
                      report.metric_name.c_str(), report.unit.c_str(), report.n_windows_skipped);
    }
    return line;
}

MetricReport merge_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("merge_reports: empty input");
    MetricReport out;
    out.metric_name = reports.front().metric_name;
    out.unit = reports.front().unit;
    int next = 0;
    for (const auto& r : reports) {
        for (auto row : r.per_window) {
            row.window_index = next++;
            out.per_window.push_back(row);
        }
        for (const auto& [idx, reason] : r.skipped) {
            (void)idx;
            out.skipped.emplace_back(next++, reason);
        }
    }
    finalize(out);
    return out;
}

} // namespace penguin
