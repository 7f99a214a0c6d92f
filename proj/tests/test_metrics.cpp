#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "penguin/metrics.hpp"

using namespace penguin;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Unit impulses at the given beat times smoothed by a 20 ms FWHM Gaussian.
std::vector<double> impulse_ecg(const std::vector<double>& beat_times_s, double fs,
                                double seconds) {
    std::size_t n = static_cast<std::size_t>(std::llround(fs * seconds));
    std::vector<double> ecg(n, 0.0);
    double sigma = 0.020 / 2.3548 * fs;
    int radius = static_cast<int>(std::ceil(4.0 * sigma));
    for (double t : beat_times_s) {
        long center = std::lround(t * fs);
        for (int i = -radius; i <= radius; ++i) {
            long idx = center + i;
            if (idx < 0 || idx >= static_cast<long>(n)) continue;
            ecg[static_cast<std::size_t>(idx)] += std::exp(-0.5 * (i / sigma) * (i / sigma));
        }
    }
    return ecg;
}

std::vector<double> constant_rate_ecg(double bpm, double fs, double seconds) {
    std::vector<double> beats;
    double interval = 60.0 / bpm;
    for (double t = 0.5; t < seconds - 0.25; t += interval) beats.push_back(t);
    return impulse_ecg(beats, fs, seconds);
}

std::vector<double> sine(double freq_hz, double fs, double seconds) {
    std::size_t n = static_cast<std::size_t>(std::llround(fs * seconds));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / fs);
    return x;
}

} // namespace

TEST_CASE("detect_r_peaks: 1 Hz impulse train for 10 s") {
    std::vector<double> beats;
    for (int i = 0; i < 10; ++i) beats.push_back(0.5 + i);
    double fs = 128.0;
    std::vector<double> ecg = impulse_ecg(beats, fs, 10.0);
    std::vector<std::size_t> peaks = detect_r_peaks(ecg, fs);
    REQUIRE(peaks.size() == 10);
    for (int i = 0; i < 10; ++i) {
        double expected = (0.5 + i) * fs;
        CHECK(std::abs(static_cast<double>(peaks[static_cast<std::size_t>(i)]) - expected) <= 2.0);
    }
}

TEST_CASE("detect_r_peaks: flat signal has no peaks") {
    std::vector<double> flat(1280, 0.0);
    CHECK(detect_r_peaks(flat, 128.0).empty());
}

TEST_CASE("detect_r_peaks: refractory rejects a 150 ms neighbor") {
    // isolated pair: 0.5 s and 0.65 s, then silence
    std::vector<double> ecg = impulse_ecg({0.5, 0.65, 2.0, 3.0}, 128.0, 4.0);
    std::vector<std::size_t> peaks = detect_r_peaks(ecg, 128.0);
    // the 0.65 s event falls inside the 200 ms refractory window
    REQUIRE(peaks.size() == 3);
    CHECK(std::abs(static_cast<double>(peaks[0]) - 0.5 * 128.0) <= 2.0);
    CHECK(std::abs(static_cast<double>(peaks[1]) - 2.0 * 128.0) <= 2.0);
}

TEST_CASE("detect_r_peaks: input validation") {
    std::vector<double> x(256, 0.0);
    CHECK_THROWS_AS(detect_r_peaks(x, 64.0), std::invalid_argument);
    std::vector<double> tiny(100, 0.0);
    CHECK_THROWS_AS(detect_r_peaks(tiny, 128.0), std::invalid_argument);
}

TEST_CASE("hr_error: identical inputs give zero MAE") {
    std::vector<double> ecg = constant_rate_ecg(66.0, 128.0, 32.0);
    MetricReport report = hr_error(ecg, ecg, 128.0);
    CHECK(report.has_value);
    CHECK(report.mae == doctest::Approx(0.0));
    CHECK(report.n_windows_valid + report.n_windows_skipped == report.n_windows_total);
}

TEST_CASE("hr_error: constructed 72 vs 60 bpm is a 12 bpm gap") {
    double fs = 128.0, seconds = 64.0;
    std::vector<double> pred = constant_rate_ecg(72.0, fs, seconds);
    std::vector<double> truth = constant_rate_ecg(60.0, fs, seconds);
    MetricReport report = hr_error(pred, truth, fs);
    CHECK(report.has_value);
    CHECK(report.mae == doctest::Approx(12.0).epsilon(0.5 / 12.0));
}

TEST_CASE("hr_error: flat truth skips every window") {
    double fs = 128.0;
    std::vector<double> pred = constant_rate_ecg(70.0, fs, 24.0);
    std::vector<double> truth(pred.size(), 0.0);
    MetricReport report = hr_error(pred, truth, fs);
    CHECK(!report.has_value);
    CHECK(report.n_windows_valid == 0);
    CHECK(report.n_windows_skipped == report.n_windows_total);
    CHECK(report.n_windows_total > 0);
    CHECK(std::isnan(report.mae));
}

TEST_CASE("hr_error: amplitude scaling does not change the result") {
    double fs = 128.0;
    std::vector<double> pred = constant_rate_ecg(88.0, fs, 32.0);
    std::vector<double> truth = constant_rate_ecg(64.0, fs, 32.0);
    MetricReport base = hr_error(pred, truth, fs);
    std::vector<double> scaled = pred;
    for (auto& v : scaled) v *= 37.5;
    MetricReport scaled_report = hr_error(scaled, truth, fs);
    CHECK(scaled_report.mae == doctest::Approx(base.mae).epsilon(1e-9));
}

TEST_CASE("rr_error: single tone against itself") {
    double fs = 128.0;
    std::vector<double> resp = sine(0.25, fs, 60.0);
    MetricReport report = rr_error(resp, resp, fs);
    REQUIRE(report.per_window.size() == 1);
    CHECK(report.per_window[0].predicted == doctest::Approx(15.0).epsilon(0.01));
    CHECK(report.per_window[0].truth == doctest::Approx(15.0).epsilon(0.01));
    CHECK(report.mae == doctest::Approx(0.0));
}

TEST_CASE("rr_error: 0.2 vs 0.3 Hz tones differ by 6 bpm") {
    double fs = 128.0;
    std::vector<double> pred = sine(0.2, fs, 120.0);
    std::vector<double> truth = sine(0.3, fs, 120.0);
    MetricReport report = rr_error(pred, truth, fs);
    CHECK(report.n_windows_valid == 2);
    CHECK(report.mae == doctest::Approx(6.0).epsilon(0.2 / 6.0));
}

TEST_CASE("rr_error: rejects signals shorter than a window") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS_AS(rr_error(x, x, 128.0), std::invalid_argument);
}

TEST_CASE("rr_error: amplitude scaling invariance") {
    double fs = 128.0;
    std::vector<double> pred = sine(0.21, fs, 60.0);
    std::vector<double> truth = sine(0.33, fs, 60.0);
    MetricReport base = rr_error(pred, truth, fs);
    std::vector<double> scaled = truth;
    for (auto& v : scaled) v *= 250.0;
    MetricReport report = rr_error(pred, scaled, fs);
    CHECK(report.mae == doctest::Approx(base.mae).epsilon(1e-9));
}

namespace {

std::vector<double> triangle_abp(double lo, double hi, double fs, double seconds) {
    std::size_t n = static_cast<std::size_t>(std::llround(fs * seconds));
    std::vector<double> x(n);
    std::size_t period = static_cast<std::size_t>(fs); // 1 s
    for (std::size_t i = 0; i < n; ++i) {
        double phase = static_cast<double>(i % period);
        double half = static_cast<double>(period) / 2.0;
        double frac = phase <= half ? phase / half : (static_cast<double>(period) - phase) / half;
        x[i] = lo + (hi - lo) * frac;
    }
    return x;
}

} // namespace

TEST_CASE("bp_error: sawtooth against itself") {
    std::vector<double> abp = triangle_abp(80.0, 120.0, 128.0, 32.0);
    auto [sbp, dbp] = bp_error(abp, abp, 128.0);
    CHECK(sbp.mae == doctest::Approx(0.0));
    CHECK(dbp.mae == doctest::Approx(0.0));
    for (const auto& row : sbp.per_window) CHECK(row.truth == doctest::Approx(120.0));
    for (const auto& row : dbp.per_window) CHECK(row.truth == doctest::Approx(80.0));
}

TEST_CASE("bp_error: constant offset shifts both errors exactly") {
    std::vector<double> truth = triangle_abp(80.0, 120.0, 128.0, 32.0);
    std::vector<double> pred = truth;
    for (auto& v : pred) v += 5.0;
    auto [sbp, dbp] = bp_error(pred, truth, 128.0);
    CHECK(sbp.mae == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(dbp.mae == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("bp_error: scaling by 1.1 moves SBP by 12 and DBP by 8") {
    std::vector<double> truth = triangle_abp(80.0, 120.0, 128.0, 32.0);
    std::vector<double> pred = truth;
    for (auto& v : pred) v *= 1.1;
    auto [sbp, dbp] = bp_error(pred, truth, 128.0);
    CHECK(sbp.mae == doctest::Approx(12.0).epsilon(1e-9));
    CHECK(dbp.mae == doctest::Approx(8.0).epsilon(1e-9));
}

TEST_CASE("bp_error: rejects signals shorter than a window") {
    std::vector<double> x(100, 100.0);
    CHECK_THROWS_AS(bp_error(x, x, 128.0), std::invalid_argument);
}

TEST_CASE("report serialization: rows, skip annotations, summary") {
    double fs = 128.0;
    std::vector<double> pred = constant_rate_ecg(72.0, fs, 32.0);
    std::vector<double> truth = constant_rate_ecg(60.0, fs, 32.0);
    MetricReport report = hr_error(pred, truth, fs);
    std::string csv = report_to_csv(report);
    CHECK(csv.find("window,predicted,truth,abs_error\n") == 0);
    std::string summary = summary_line(report);
    CHECK(summary.find("HR Error [bpm]:") == 0);

    MetricReport merged = merge_reports({report, report});
    CHECK(merged.n_windows_total == 2 * report.n_windows_total);
    CHECK(merged.mae == doctest::Approx(report.mae));
}
