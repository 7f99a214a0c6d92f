#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "penguin/dsp.hpp"
#include "test_util.hpp"

using namespace penguin;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> sine(double freq_hz, double fs, double seconds, double amp = 1.0) {
    std::size_t n = static_cast<std::size_t>(std::llround(fs * seconds));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / fs);
    return x;
}

// Least-squares amplitude of a known tone over [lo, hi) — an estimator
// independent of any filtering/resampling machinery under test.
double tone_amplitude(const std::vector<double>& x, double fs, double freq_hz, std::size_t lo,
                      std::size_t hi) {
    double ss = 0.0, sc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        double arg = 2.0 * kPi * freq_hz * static_cast<double>(i) / fs;
        ss += x[i] * std::sin(arg);
        sc += x[i] * std::cos(arg);
    }
    double n = static_cast<double>(hi - lo);
    return 2.0 * std::hypot(ss, sc) / n;
}

// Lag of the cross-correlation maximum between equal-length signals.
int xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
    double best = -1e300;
    int best_lag = 0;
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + lag;
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(b.size())) continue;
            acc += a[i] * b[static_cast<std::size_t>(j)];
        }
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    return best_lag;
}

} // namespace

TEST_CASE("resample: same rate is identity") {
    std::vector<double> x = sine(2.0, 128.0, 2.0);
    CHECK(resample(x, 128.0, 128.0) == x);
}

TEST_CASE("resample: 1 Hz tone 125 -> 128 Hz preserves amplitude within 2%") {
    std::vector<double> x = sine(1.0, 125.0, 10.0);
    std::vector<double> y = resample(x, 125.0, 128.0);
    CHECK(y.size() == static_cast<std::size_t>(std::llround(1250.0 * 128.0 / 125.0)));
    double amp = tone_amplitude(y, 128.0, 1.0, 128, y.size() - 128);
    CHECK(amp == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("resample: downsampling preserves mid-band amplitude within 2%") {
    std::vector<double> x = sine(5.0, 500.0, 10.0);
    std::vector<double> y = resample(x, 500.0, 128.0);
    double amp = tone_amplitude(y, 128.0, 5.0, 128, y.size() - 128);
    CHECK(amp == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("resample: constant signal stays constant at any rate pair") {
    for (auto [from, to] : std::vector<std::pair<double, double>>{
             {125.0, 128.0}, {500.0, 128.0}, {128.0, 500.0}, {97.3, 128.0}}) {
        std::vector<double> x(static_cast<std::size_t>(from * 4), 3.25);
        std::vector<double> y = resample(x, from, to);
        for (double v : y) CHECK(v == doctest::Approx(3.25).epsilon(1e-6));
    }
}

TEST_CASE("resample: rejects bad rates") {
    std::vector<double> x(16, 0.0);
    CHECK_THROWS_AS(resample(x, 0.0, 128.0), std::invalid_argument);
    CHECK_THROWS_AS(resample(x, 128.0, -1.0), std::invalid_argument);
}

TEST_CASE("butterworth: lowpass cutoff magnitude is 1/sqrt(2)") {
    FilterSpec spec;
    spec.kind = FilterKind::Lowpass;
    spec.low_hz = 1.0;
    spec.order = 4;
    BiquadCascade c = design_butterworth(spec, 128.0);
    double mag = std::abs(cascade_response(c, 1.0, 128.0));
    CHECK(mag == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
    CHECK(std::abs(cascade_response(c, 0.01, 128.0)) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("butterworth: bandpass passband and stopband") {
    FilterSpec spec;
    spec.kind = FilterKind::Bandpass;
    spec.low_hz = 0.5;
    spec.high_hz = 4.0;
    spec.order = 4;
    BiquadCascade c = design_butterworth(spec, 128.0);
    CHECK(std::abs(cascade_response(c, 2.0, 128.0)) >= 0.99);
    CHECK(std::abs(cascade_response(c, 0.05, 128.0)) <= 0.01);
    // both edges at half power
    CHECK(std::abs(cascade_response(c, 0.5, 128.0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
    CHECK(std::abs(cascade_response(c, 4.0, 128.0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("butterworth: highpass cutoff") {
    FilterSpec spec;
    spec.kind = FilterKind::Highpass;
    spec.low_hz = 0.5;
    spec.order = 4;
    BiquadCascade c = design_butterworth(spec, 128.0);
    CHECK(std::abs(cascade_response(c, 0.5, 128.0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
    CHECK(std::abs(cascade_response(c, 30.0, 128.0)) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("butterworth: every task cascade is stable at 128 Hz") {
    for (ChannelRole role : {ChannelRole::PPG, ChannelRole::ECG, ChannelRole::RESP}) {
        BiquadCascade c = design_butterworth(role_filter_spec(role), 128.0);
        CHECK(cascade_stable(c));
    }
    // Hamilton's detection band too
    FilterSpec spec;
    spec.kind = FilterKind::Bandpass;
    spec.low_hz = 8.0;
    spec.high_hz = 16.0;
    spec.order = 4;
    CHECK(cascade_stable(design_butterworth(spec, 128.0)));
}

TEST_CASE("butterworth: cutoff above Nyquist rejected") {
    FilterSpec spec;
    spec.kind = FilterKind::Lowpass;
    spec.low_hz = 70.0;
    spec.order = 4;
    CHECK_THROWS_AS(design_butterworth(spec, 128.0), std::invalid_argument);
}

TEST_CASE("apply_filter: DC suppressed by the PPG bandpass") {
    BiquadCascade c = design_butterworth(role_filter_spec(ChannelRole::PPG), 128.0);
    std::vector<double> x(static_cast<std::size_t>(128 * 20), 2.0);
    std::vector<double> y = apply_filter(c, x, true);
    double worst = 0.0;
    for (std::size_t i = 256; i + 256 < y.size(); ++i) worst = std::max(worst, std::abs(y[i]));
    CHECK(worst <= 1e-3 * 2.0);
}

TEST_CASE("apply_filter: zero-phase passband tone keeps amplitude and lag 0") {
    BiquadCascade c = design_butterworth(role_filter_spec(ChannelRole::PPG), 128.0);
    std::vector<double> x = sine(2.0, 128.0, 20.0);
    std::vector<double> y = apply_filter(c, x, true);
    REQUIRE(y.size() == x.size());

    double peak_in = 0.0, peak_out = 0.0;
    for (std::size_t i = 512; i + 512 < x.size(); ++i) {
        peak_in = std::max(peak_in, std::abs(x[i]));
        peak_out = std::max(peak_out, std::abs(y[i]));
    }
    CHECK(peak_out == doctest::Approx(peak_in).epsilon(0.05));

    std::vector<double> mid_x(x.begin() + 512, x.end() - 512);
    std::vector<double> mid_y(y.begin() + 512, y.end() - 512);
    CHECK(xcorr_peak_lag(mid_x, mid_y, 32) == 0);
}

TEST_CASE("apply_filter: single-pass filtering of the same tone lags") {
    // contrast case: without the backward pass the group delay is nonzero
    BiquadCascade c = design_butterworth(role_filter_spec(ChannelRole::RESP), 128.0);
    std::vector<double> x = sine(0.4, 128.0, 30.0);
    std::vector<double> y = apply_filter(c, x, false);
    std::vector<double> mid_x(x.begin() + 1024, x.end() - 1024);
    std::vector<double> mid_y(y.begin() + 1024, y.end() - 1024);
    CHECK(xcorr_peak_lag(mid_x, mid_y, 200) != 0);
}

TEST_CASE("apply_filter: minimum zero-phase length admitted") {
    BiquadCascade c = design_butterworth(role_filter_spec(ChannelRole::PPG), 128.0);
    std::size_t min_len = zero_phase_min_length(c);
    std::vector<double> ok(min_len, 1.0);
    CHECK_NOTHROW(apply_filter(c, ok, true));
    std::vector<double> short_sig(min_len - 1, 1.0);
    CHECK_THROWS_AS(apply_filter(c, short_sig, true), std::invalid_argument);
}

TEST_CASE("standardize_unit: constant input maps to zeros") {
    std::vector<double> y = standardize_unit(std::vector<double>(100, 7.5));
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("standardize_unit: alternating unit signal is unchanged") {
    std::vector<double> x;
    for (int i = 0; i < 50; ++i) {
        x.push_back(-1.0);
        x.push_back(1.0);
    }
    std::vector<double> y = standardize_unit(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("standardize_unit: bounded with unit peak, idempotent") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 16 + rng.uniform_index(256);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal() * rng.uniform(0.1, 50.0) + rng.uniform(-20.0, 20.0);
        std::vector<double> y = standardize_unit(x);
        double peak = 0.0;
        for (double v : y) peak = std::max(peak, std::abs(v));
        CHECK(peak <= 1.0 + 1e-12);
        CHECK(peak == doctest::Approx(1.0).epsilon(1e-9));

        std::vector<double> y2 = standardize_unit(y);
        for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i]).epsilon(1e-6));
    }
}

namespace {

WaveformRecord single_channel_record(const std::string& label, const std::vector<double>& data,
                                     Task task) {
    WaveformRecord rec;
    rec.subject_id = "s";
    rec.task = task;
    rec.sample_rate_hz = 128.0;
    Channel ch;
    ch.label = label;
    ch.samples.assign(data.begin(), data.end());
    rec.channels.push_back(std::move(ch));
    return rec;
}

} // namespace

TEST_CASE("preprocess_task: ABP passes through untouched") {
    std::vector<double> abp;
    for (int i = 0; i < 1024; ++i) abp.push_back(80.0 + 40.0 * (i % 100) / 100.0);
    WaveformRecord rec = single_channel_record("abp", abp, Task::ABP);
    WaveformRecord out = preprocess_task(rec, "abp", ChannelRole::ABP);
    CHECK(out == rec);
}

TEST_CASE("preprocess_task: PPG output is zero-mean with unit peak") {
    std::vector<double> raw = sine(1.5, 128.0, 30.0, 3.0);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += 10.0; // DC offset to remove
    WaveformRecord rec = single_channel_record("ppg", raw, Task::ECG);
    WaveformRecord out = preprocess_task(rec, "ppg", ChannelRole::PPG);
    const auto& y = out.channels[0].samples;
    double mean = 0.0, peak = 0.0;
    for (float v : y) {
        mean += v;
        peak = std::max(peak, std::abs(static_cast<double>(v)));
    }
    mean /= static_cast<double>(y.size());
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(peak <= 1.0 + 1e-6);
}

TEST_CASE("preprocess_task: RESP keeps 0.25 Hz and suppresses 5 Hz") {
    std::vector<double> lo = sine(0.25, 128.0, 60.0);
    std::vector<double> hi = sine(5.0, 128.0, 60.0);
    std::vector<double> mix(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) mix[i] = lo[i] + hi[i];
    WaveformRecord rec = single_channel_record("resp", mix, Task::RESP);
    WaveformRecord out = preprocess_task(rec, "resp", ChannelRole::RESP);
    std::vector<double> y(out.channels[0].samples.begin(), out.channels[0].samples.end());

    // filter-only reference: run the chain without normalization to measure gains
    BiquadCascade c = design_butterworth(role_filter_spec(ChannelRole::RESP), 128.0);
    std::vector<double> filtered = apply_filter(c, mix, true);
    std::size_t edge = 512;
    double amp_lo = tone_amplitude(filtered, 128.0, 0.25, edge, filtered.size() - edge);
    double amp_hi = tone_amplitude(filtered, 128.0, 5.0, edge, filtered.size() - edge);
    CHECK(amp_lo >= 0.95);
    CHECK(amp_hi <= 0.01);
    CHECK(y.size() == mix.size());
}

TEST_CASE("preprocess_task: missing channel") {
    WaveformRecord rec = single_channel_record("ppg", sine(1.0, 128.0, 4.0), Task::ECG);
    CHECK_THROWS_AS(preprocess_task(rec, "ecg", ChannelRole::ECG), SchemaError);
}
