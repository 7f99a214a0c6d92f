#include "penguin/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace penguin {

namespace {

constexpr double kPi = 3.14159265358979323846;

double bessel_i0(double x) {
    // Series expansion; converges quickly for the argument range we use.
    double sum = 1.0, term = 1.0;
    double half = x / 2.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    return std::sin(kPi * x) / (kPi * x);
}

// Best rational approximation p/q to x with q <= max_den, via continued
// fractions. Returns false if the approximation is not essentially exact.
bool to_rational(double x, long max_den, long& p_out, long& q_out) {
    long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double v = x;
    for (int i = 0; i < 64; ++i) {
        double fl = std::floor(v);
        if (fl > 1e12) return false;
        long a = static_cast<long>(fl);
        long p2 = a * p1 + p0;
        long q2 = a * q1 + q0;
        if (q2 > max_den || p2 > max_den * 16) break;
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        double rem = v - fl;
        if (rem < 1e-12) break;
        v = 1.0 / rem;
    }
    if (q1 == 0) return false;
    p_out = p1;
    q_out = q1;
    return std::abs(x - static_cast<double>(p1) / static_cast<double>(q1)) < 1e-9 * std::abs(x);
}

constexpr int kTapsPerSide = 32;
constexpr double kKaiserBeta = 8.0;

// Kernel value at offset x, measured in samples of the *lower* of the two
// rates; `stretch` = input samples per lower-rate sample (>= 1 when
// downsampling, 1 otherwise).
double resample_kernel(double x_input_samples, double stretch) {
    double x = x_input_samples / stretch; // offset at the lower rate
    if (std::abs(x) >= kTapsPerSide) return 0.0;
    double w = bessel_i0(kKaiserBeta * std::sqrt(1.0 - (x / kTapsPerSide) * (x / kTapsPerSide))) /
               bessel_i0(kKaiserBeta);
    return sinc(x) * w / stretch;
}

} // namespace

std::vector<double> resample(const std::vector<double>& signal, double from_hz, double to_hz) {
    if (!(from_hz > 0.0) || !(to_hz > 0.0))
        throw std::invalid_argument("resample: rates must be positive");
    if (from_hz == to_hz) return signal;
    if (signal.size() < 2)
        throw std::invalid_argument("resample: need at least 2 samples");

    const std::size_t n_in = signal.size();
    const double ratio = to_hz / from_hz;
    const std::size_t n_out =
        static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));
    const double stretch = std::max(1.0, from_hz / to_hz);
    const int half = static_cast<int>(std::ceil(kTapsPerSide * stretch)) + 1;

    auto sample_at = [&](long idx) {
        idx = std::clamp<long>(idx, 0, static_cast<long>(n_in) - 1); // edge replication
        return signal[static_cast<std::size_t>(idx)];
    };

    std::vector<double> out(n_out);

    long up = 0, down = 0;
    if (to_rational(from_hz / to_hz, 4096, down, up)) {
        // Polyphase: output i sits at input time i*down/up; phase = (i*down) mod up.
        std::vector<std::vector<double>> taps(static_cast<std::size_t>(up));
        for (long phase = 0; phase < up; ++phase) {
            auto& t = taps[static_cast<std::size_t>(phase)];
            t.resize(2 * half + 1);
            double frac = static_cast<double>(phase) / static_cast<double>(up) * down;
            frac -= std::floor(frac);
            double sum = 0.0;
            for (int j = -half; j <= half; ++j) {
                double v = resample_kernel(frac - j, stretch);
                t[static_cast<std::size_t>(j + half)] = v;
                sum += v;
            }
            for (auto& v : t) v /= sum; // unit DC gain at every phase
        }
        for (std::size_t i = 0; i < n_out; ++i) {
            long num = static_cast<long>(i) * down;
            long base = num / up;
            long phase = num % up;
            const auto& t = taps[static_cast<std::size_t>(phase)];
            double acc = 0.0;
            for (int j = -half; j <= half; ++j)
                acc += t[static_cast<std::size_t>(j + half)] * sample_at(base + j);
            out[i] = acc;
        }
    } else {
        for (std::size_t i = 0; i < n_out; ++i) {
            double tau = static_cast<double>(i) / ratio;
            long base = static_cast<long>(std::floor(tau));
            double frac = tau - static_cast<double>(base);
            double acc = 0.0, ksum = 0.0;
            for (int j = -half; j <= half; ++j) {
                double v = resample_kernel(frac - j, stretch);
                acc += v * sample_at(base + j);
                ksum += v;
            }
            out[i] = acc / ksum;
        }
    }
    return out;
}

namespace {

using cplx = std::complex<double>;

void validate_spec(const FilterSpec& spec, double fs) {
    if (spec.order < 1) throw std::invalid_argument("filter order must be >= 1");
    double nyq = fs / 2.0;
    switch (spec.kind) {
        case FilterKind::Lowpass:
        case FilterKind::Highpass:
            if (!(spec.low_hz > 0.0) || spec.low_hz >= nyq)
                throw std::invalid_argument("cutoff must lie in (0, Nyquist)");
            break;
        case FilterKind::Bandpass:
            if (!(spec.low_hz > 0.0) || !(spec.high_hz > spec.low_hz) || spec.high_hz >= nyq)
                throw std::invalid_argument("bandpass edges must satisfy 0 < low < high < Nyquist");
            break;
    }
}

// Group complex poles into conjugate-pair biquad denominators; real poles
// pair up two at a time (or form a first-order tail section).
std::vector<Biquad> sections_from_poles(const std::vector<cplx>& poles) {
    std::vector<cplx> complex_poles;
    std::vector<double> real_poles;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) > 1e-10) {
            if (p.imag() > 0) complex_poles.push_back(p);
        } else {
            real_poles.push_back(p.real());
        }
    }
    std::sort(complex_poles.begin(), complex_poles.end(),
              [](const cplx& a, const cplx& b) { return std::abs(a) > std::abs(b); });
    std::sort(real_poles.begin(), real_poles.end());

    std::vector<Biquad> sections;
    for (const auto& p : complex_poles) {
        Biquad s;
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        sections.push_back(s);
    }
    std::size_t i = 0;
    for (; i + 1 < real_poles.size(); i += 2) {
        Biquad s;
        s.a1 = -(real_poles[i] + real_poles[i + 1]);
        s.a2 = real_poles[i] * real_poles[i + 1];
        sections.push_back(s);
    }
    if (i < real_poles.size()) {
        Biquad s;
        s.a1 = -real_poles[i];
        s.a2 = 0.0;
        sections.push_back(s);
    }
    return sections;
}

} // namespace

std::complex<double> cascade_response(const BiquadCascade& cascade, double freq_hz, double fs) {
    double w = 2.0 * kPi * freq_hz / fs;
    cplx z_inv = std::exp(cplx(0.0, -w));
    cplx h(1.0, 0.0);
    for (const auto& s : cascade.sections) {
        cplx num = s.b0 + s.b1 * z_inv + s.b2 * z_inv * z_inv;
        cplx den = 1.0 + s.a1 * z_inv + s.a2 * z_inv * z_inv;
        h *= num / den;
    }
    return h;
}

bool cascade_stable(const BiquadCascade& cascade) {
    for (const auto& s : cascade.sections) {
        // roots of z^2 + a1 z + a2
        cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        cplx r1 = (-s.a1 + disc) / 2.0;
        cplx r2 = (-s.a1 - disc) / 2.0;
        if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0) return false;
    }
    return true;
}

BiquadCascade design_butterworth(const FilterSpec& spec, double sample_rate_hz) {
    validate_spec(spec, sample_rate_hz);
    const int n = spec.order;

    // Analog Butterworth prototype poles on the left unit semicircle.
    std::vector<cplx> proto(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        double angle = kPi * (2.0 * k + 1.0) / (2.0 * n) + kPi / 2.0;
        proto[static_cast<std::size_t>(k)] = cplx(std::cos(angle), std::sin(angle));
    }

    auto prewarp = [&](double f) { return 2.0 * std::tan(kPi * f / sample_rate_hz); };

    std::vector<cplx> analog_poles;
    double ref_freq_hz = 0.0; // where |H| is pinned to 1
    switch (spec.kind) {
        case FilterKind::Lowpass: {
            double wc = prewarp(spec.low_hz);
            for (const auto& p : proto) analog_poles.push_back(p * wc);
            ref_freq_hz = 0.0;
            break;
        }
        case FilterKind::Highpass: {
            double wc = prewarp(spec.low_hz);
            for (const auto& p : proto) analog_poles.push_back(wc / p);
            ref_freq_hz = sample_rate_hz / 2.0;
            break;
        }
        case FilterKind::Bandpass: {
            double wl = prewarp(spec.low_hz), wh = prewarp(spec.high_hz);
            double w0sq = wl * wh, bw = wh - wl;
            for (const auto& p : proto) {
                cplx bp_half = bw * p / 2.0;
                cplx disc = std::sqrt(bp_half * bp_half - w0sq);
                analog_poles.push_back(bp_half + disc);
                analog_poles.push_back(bp_half - disc);
            }
            // digital frequency whose prewarp equals the geometric center
            ref_freq_hz = std::atan(std::sqrt(w0sq) / 2.0) * sample_rate_hz / kPi;
            break;
        }
    }

    // Bilinear transform of the poles (T = 1, s = 2(z-1)/(z+1)).
    std::vector<cplx> digital_poles;
    digital_poles.reserve(analog_poles.size());
    for (const auto& s : analog_poles) digital_poles.push_back((2.0 + s) / (2.0 - s));

    BiquadCascade cascade;
    cascade.sections = sections_from_poles(digital_poles);

    // Fixed zero patterns at z = +/-1 per kind.
    for (auto& s : cascade.sections) {
        bool first_order = (s.a2 == 0.0);
        switch (spec.kind) {
            case FilterKind::Lowpass:
                s.b0 = 1.0;
                s.b1 = first_order ? 1.0 : 2.0;
                s.b2 = first_order ? 0.0 : 1.0;
                break;
            case FilterKind::Highpass:
                s.b0 = 1.0;
                s.b1 = first_order ? -1.0 : -2.0;
                s.b2 = first_order ? 0.0 : 1.0;
                break;
            case FilterKind::Bandpass:
                s.b0 = 1.0;
                s.b1 = 0.0;
                s.b2 = -1.0;
                break;
        }
    }

    // Normalize so |H| = 1 at the reference frequency, spreading the gain
    // evenly across sections.
    double mag = std::abs(cascade_response(cascade, ref_freq_hz, sample_rate_hz));
    if (!(mag > 0.0)) throw std::runtime_error("butterworth design degenerate at reference");
    double per_section = std::pow(1.0 / mag, 1.0 / static_cast<double>(cascade.sections.size()));
    for (auto& s : cascade.sections) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }

    if (!cascade_stable(cascade))
        throw std::runtime_error("butterworth design produced an unstable cascade");
    return cascade;
}

namespace {

// One biquad over the signal, direct form II transposed, with given
// initial state (scaled steady-state for step response).
void run_biquad(const Biquad& s, std::vector<double>& x, bool steady_init) {
    double z1 = 0.0, z2 = 0.0;
    if (steady_init && !x.empty()) {
        double den = 1.0 + s.a1 + s.a2;
        double y_ss = std::abs(den) > 1e-12 ? (s.b0 + s.b1 + s.b2) / den : 0.0;
        double s2 = s.b2 - s.a2 * y_ss;
        double s1 = s.b1 - s.a1 * y_ss + s2;
        z1 = s1 * x[0];
        z2 = s2 * x[0];
    }
    for (auto& v : x) {
        double y = s.b0 * v + z1;
        z1 = s.b1 * v - s.a1 * y + z2;
        z2 = s.b2 * v - s.a2 * y;
        v = y;
    }
}

void run_cascade(const BiquadCascade& c, std::vector<double>& x, bool steady_init) {
    for (const auto& s : c.sections) run_biquad(s, x, steady_init);
}

} // namespace

std::size_t zero_phase_min_length(const BiquadCascade& cascade) {
    return 3 * (2 * cascade.sections.size() + 1) + 1;
}

std::vector<double> apply_filter(const BiquadCascade& cascade, const std::vector<double>& signal,
                                 bool zero_phase) {
    if (cascade.sections.empty()) throw std::invalid_argument("apply_filter: empty cascade");
    if (!zero_phase) {
        std::vector<double> y = signal;
        run_cascade(cascade, y, true);
        return y;
    }

    const std::size_t pad = 3 * (2 * cascade.sections.size() + 1);
    if (signal.size() < pad + 1)
        throw std::invalid_argument("apply_filter: signal too short for zero-phase padding (need > " +
                                    std::to_string(pad) + " samples)");

    // Odd reflection about both endpoints.
    std::vector<double> ext;
    ext.reserve(signal.size() + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal.front() - signal[i]);
    ext.insert(ext.end(), signal.begin(), signal.end());
    for (std::size_t i = 0; i < pad; ++i)
        ext.push_back(2.0 * signal.back() - signal[signal.size() - 2 - i]);

    run_cascade(cascade, ext, true);
    std::reverse(ext.begin(), ext.end());
    run_cascade(cascade, ext, true);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + signal.size()));
}

std::vector<double> standardize_unit(const std::vector<double>& signal) {
    constexpr double eps = 1e-8;
    if (signal.empty()) return {};
    double n = static_cast<double>(signal.size());
    double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
    double var = 0.0;
    for (double v : signal) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n);
    std::vector<double> y(signal.size());
    double inv = 1.0 / std::max(sd, eps);
    for (std::size_t i = 0; i < signal.size(); ++i) y[i] = (signal[i] - mean) * inv;
    double peak = 0.0;
    for (double v : y) peak = std::max(peak, std::abs(v));
    double scale = 1.0 / std::max(peak, eps);
    for (auto& v : y) v *= scale;
    return y;
}

ChannelRole role_from_task(Task t) {
    switch (t) {
        case Task::ECG: return ChannelRole::ECG;
        case Task::RESP: return ChannelRole::RESP;
        case Task::ABP: return ChannelRole::ABP;
    }
    throw std::invalid_argument("role_from_task: bad task");
}

FilterSpec role_filter_spec(ChannelRole role) {
    FilterSpec spec;
    spec.order = 4;
    spec.zero_phase = true;
    switch (role) {
        case ChannelRole::PPG:
            spec.kind = FilterKind::Bandpass;
            spec.low_hz = 0.5;
            spec.high_hz = 4.0;
            return spec;
        case ChannelRole::ECG:
            spec.kind = FilterKind::Highpass;
            spec.low_hz = 0.5;
            return spec;
        case ChannelRole::RESP:
            spec.kind = FilterKind::Lowpass;
            spec.low_hz = 1.0;
            return spec;
        case ChannelRole::ABP:
            throw std::invalid_argument("ABP has no preprocessing filter");
    }
    throw std::invalid_argument("role_filter_spec: bad role");
}

WaveformRecord preprocess_task(const WaveformRecord& record, std::string_view channel_label,
                               ChannelRole role) {
    WaveformRecord out = record;
    Channel* ch = out.find_channel(channel_label);
    if (!ch)
        throw SchemaError("preprocess_task: missing channel '" + std::string(channel_label) + "'");
    if (role == ChannelRole::ABP) return out; // amplitude carries meaning; leave untouched

    std::vector<double> x(ch->samples.begin(), ch->samples.end());
    FilterSpec spec = role_filter_spec(role);
    BiquadCascade cascade = design_butterworth(spec, record.sample_rate_hz);
    x = apply_filter(cascade, x, spec.zero_phase);
    x = standardize_unit(x);
    for (std::size_t i = 0; i < x.size(); ++i) ch->samples[i] = static_cast<float>(x[i]);
    return out;
}

} // namespace penguin
