#pragma once

#include <complex>
#include <vector>

#include "penguin/waveform.hpp"

namespace penguin {

enum class FilterKind { Lowpass, Highpass, Bandpass };

struct FilterSpec {
    FilterKind kind = FilterKind::Lowpass;
    double low_hz = 0.0;  // lowpass/highpass cutoff, or bandpass lower edge
    double high_hz = 0.0; // bandpass upper edge (unused otherwise)
    int order = 4;
    bool zero_phase = true;
};

struct Biquad {
    double b0 = 0, b1 = 0, b2 = 0; // numerator
    double a1 = 0, a2 = 0;         // denominator (a0 normalized to 1)
};

struct BiquadCascade {
    std::vector<Biquad> sections;
};

// H(e^{j 2 pi f / fs}) of the cascade, single pass.
std::complex<double> cascade_response(const BiquadCascade& cascade, double freq_hz, double fs);

// True when every section's poles lie strictly inside the unit circle.
bool cascade_stable(const BiquadCascade& cascade);

// Band-limited rate conversion (Kaiser-windowed sinc, 32 taps per side at
// the lower rate; polyphase when from/to reduce to a small rational).
// Output length = round(len * to_hz / from_hz).
std::vector<double> resample(const std::vector<double>& signal, double from_hz, double to_hz);

// Bilinear-transform Butterworth with frequency prewarping; |H| at each
// cutoff is 1/sqrt(2) per pass.
BiquadCascade design_butterworth(const FilterSpec& spec, double sample_rate_hz);

// zero_phase runs forward then reversed-backward with odd-reflection edge
// padding, giving zero net phase. Output length equals input length.
std::vector<double> apply_filter(const BiquadCascade& cascade, const std::vector<double>& signal,
                                 bool zero_phase);

// Minimum input length apply_filter accepts in zero-phase mode.
std::size_t zero_phase_min_length(const BiquadCascade& cascade);

// z-score then peak normalization: y = (x - mean)/max(std, eps), y /= max(max|y|, eps).
std::vector<double> standardize_unit(const std::vector<double>& signal);

enum class ChannelRole { PPG, ECG, RESP, ABP };

ChannelRole role_from_task(Task t);

// Task filter chains at the record's own sample rate:
//   PPG  -> 0.5-4 Hz bandpass + standardize_unit
//   ECG  -> 0.5 Hz highpass   + standardize_unit
//   RESP -> 1 Hz lowpass      + standardize_unit
//   ABP  -> identity (values stay in mmHg)
// Returns the record with the named channel's samples replaced.
WaveformRecord preprocess_task(const WaveformRecord& record, std::string_view channel_label,
                               ChannelRole role);

// The FilterSpec preprocess_task uses for a role (ABP has none; throws).
FilterSpec role_filter_spec(ChannelRole role);

} // namespace penguin
