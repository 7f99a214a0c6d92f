#include "penguin/synth.hpp"

#include <algorithm>
#include <cmath>

#include "penguin/common.hpp"
#include "penguin/dsp.hpp"

namespace penguin {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Bounded random walk of an instantaneous rate, one value per sample.
std::vector<double> rate_walk(Rng& rng, std::size_t n, double fs, double lo, double hi,
                              double max_step_per_s, double fixed) {
    std::vector<double> rate(n);
    if (fixed > 0.0) {
        std::fill(rate.begin(), rate.end(), fixed);
        return rate;
    }
    double r = rng.uniform(lo, hi);
    double step = max_step_per_s / fs;
    for (std::size_t k = 0; k < n; ++k) {
        r += rng.uniform(-step, step);
        r = std::clamp(r, lo, hi);
        rate[k] = r;
    }
    return rate;
}

// Beat onsets (sample indices) from a bpm trace via phase integration.
std::vector<std::size_t> beats_from_rate(const std::vector<double>& bpm, double fs) {
    std::vector<std::size_t> beats;
    double phase = 0.0;
    for (std::size_t k = 0; k < bpm.size(); ++k) {
        double next = phase + bpm[k] / (60.0 * fs);
        if (std::floor(next) > std::floor(phase)) beats.push_back(k);
        phase = next;
    }
    return beats;
}

// Gaussian spike kernel, peak normalized to 1; 20 ms full width at half max.
std::vector<double> qrs_kernel(double fs) {
    double sigma = (0.020 / 2.3548) * fs; // FWHM -> sigma, in samples
    int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    return k;
}

// Asymmetric PPG pulse: half-cosine rise over 80 ms to the peak, then an
// exponential decay faded out at 350 ms. Peak value 1 at offset 0.
std::vector<double> ppg_kernel(double fs, int& peak_offset) {
    const double rise_s = 0.08, tail_s = 0.35, decay_s = 0.12;
    int rise = static_cast<int>(std::lround(rise_s * fs));
    int tail = static_cast<int>(std::lround(tail_s * fs));
    peak_offset = rise;
    std::vector<double> k(static_cast<std::size_t>(rise + tail + 1));
    for (int i = 0; i <= rise; ++i) {
        double tau = static_cast<double>(i - rise) / fs; // in [-rise_s, 0]
        k[static_cast<std::size_t>(i)] = 0.5 * (1.0 + std::cos(kPi * tau / rise_s));
    }
    for (int i = 1; i <= tail; ++i) {
        double tau = static_cast<double>(i) / fs;
        double fade = std::cos(kPi * tau / (2.0 * tail_s));
        k[static_cast<std::size_t>(rise + i)] = std::exp(-tau / decay_s) * fade * fade;
    }
    return k;
}

// Sum of kernels placed at (beat + delay) with per-beat amplitude.
void add_pulses(std::vector<double>& out, const std::vector<std::size_t>& beats,
                const std::vector<double>& kernel, int kernel_peak_offset, int delay_samples,
                const std::vector<double>& amps) {
    std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
    for (std::size_t b = 0; b < beats.size(); ++b) {
        std::ptrdiff_t start = static_cast<std::ptrdiff_t>(beats[b]) + delay_samples -
                               kernel_peak_offset;
        for (std::size_t i = 0; i < kernel.size(); ++i) {
            std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
            if (idx < 0 || idx >= n) continue;
            out[static_cast<std::size_t>(idx)] += amps[b] * kernel[i];
        }
    }
}

std::vector<float> to_f32(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

// Cardiac pulse train with jittered amplitudes plus additive noise; shared
// by the cardiac and respiratory generators.
std::vector<double> cardiac_ppg(Rng& rng, const std::vector<std::size_t>& beats, std::size_t n,
                                double fs, double delay_s, double noise) {
    int peak_offset = 0;
    std::vector<double> kernel = ppg_kernel(fs, peak_offset);
    std::vector<double> amps(beats.size());
    for (auto& a : amps) a = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
    std::vector<double> ppg(n, 0.0);
    add_pulses(ppg, beats, kernel, peak_offset, static_cast<int>(std::lround(delay_s * fs)), amps);
    for (auto& v : ppg) v += noise * rng.normal();
    return ppg;
}

} // namespace

void SynthConfig::validate() const {
    if (n_subjects < 1) throw std::invalid_argument("synth: n_subjects must be >= 1");
    if (seconds_per_subject <= 0) throw std::invalid_argument("synth: seconds must be positive");
    if (fs != 128.0) throw std::invalid_argument("synth: generated records are 128 Hz");
    if (hr_min >= hr_max || rr_min >= rr_max || sbp_min >= sbp_max || dbp_min >= dbp_max)
        throw std::invalid_argument("synth: empty rate range");
}

WaveformRecord gen_cardiac(const SynthConfig& cfg, int subject_index) {
    cfg.validate();
    Rng rng(cfg.seed + static_cast<std::uint64_t>(subject_index));
    std::size_t n = static_cast<std::size_t>(std::llround(cfg.seconds_per_subject * cfg.fs));

    std::vector<double> hr =
        rate_walk(rng, n, cfg.fs, cfg.hr_min, cfg.hr_max, 2.0, cfg.fixed_hr_bpm);
    std::vector<std::size_t> beats = beats_from_rate(hr, cfg.fs);

    std::vector<double> ecg(n, 0.0);
    std::vector<double> unit_amps(beats.size(), 1.0);
    std::vector<double> spike = qrs_kernel(cfg.fs);
    add_pulses(ecg, beats, spike, static_cast<int>(spike.size() / 2), 0, unit_amps);
    for (auto& v : ecg) v += cfg.ecg_noise * rng.normal();

    std::vector<double> ppg = cardiac_ppg(rng, beats, n, cfg.fs, cfg.ppg_delay_s, cfg.ppg_noise);

    WaveformRecord rec;
    rec.subject_id = "subject_" + std::to_string(subject_index);
    rec.task = Task::ECG;
    rec.sample_rate_hz = cfg.fs;
    rec.channels.push_back({"ppg", to_f32(ppg)});
    rec.channels.push_back({"ecg", to_f32(ecg)});
    return rec;
}

WaveformRecord gen_resp(const SynthConfig& cfg, int subject_index) {
    cfg.validate();
    Rng rng(cfg.seed + static_cast<std::uint64_t>(subject_index));
    std::size_t n = static_cast<std::size_t>(std::llround(cfg.seconds_per_subject * cfg.fs));

    std::vector<double> rr =
        rate_walk(rng, n, cfg.fs, cfg.rr_min, cfg.rr_max, 0.5, cfg.fixed_rr_bpm);
    std::vector<double> resp(n);
    double phase = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        resp[k] = std::sin(2.0 * kPi * phase);
        phase += rr[k] / (60.0 * cfg.fs);
    }

    std::vector<double> hr = rate_walk(rng, n, cfg.fs, cfg.hr_min, cfg.hr_max, 2.0, 0.0);
    std::vector<std::size_t> beats = beats_from_rate(hr, cfg.fs);
    std::vector<double> pulses = cardiac_ppg(rng, beats, n, cfg.fs, cfg.ppg_delay_s, 0.0);

    std::vector<double> ppg(n);
    for (std::size_t k = 0; k < n; ++k)
        ppg[k] = pulses[k] * (1.0 + cfg.resp_mod_depth * resp[k]) + cfg.resp_baseline * resp[k] +
                 cfg.ppg_noise * rng.normal();

    WaveformRecord rec;
    rec.subject_id = "subject_" + std::to_string(subject_index);
    rec.task = Task::RESP;
    rec.sample_rate_hz = cfg.fs;
    rec.channels.push_back({"ppg", to_f32(ppg)});
    rec.channels.push_back({"resp", to_f32(resp)});
    return rec;
}

namespace {

// Normalized per-beat pressure shape on sigma in [0,1): 0 at the beat
// onset, flat-topped systolic peak at sigma_p, dicrotic bump, back to 0.
double abp_shape(double sigma) {
    const double sigma_p = 0.13;
    double s;
    if (sigma < sigma_p) {
        double u = std::sin(kPi * sigma / (2.0 * sigma_p));
        s = u * u;
    } else {
        double u = std::cos(kPi / 2.0 * (sigma - sigma_p) / (1.0 - sigma_p));
        s = u * u;
    }
    double d = (sigma - 0.45) / 0.06;
    s += 0.12 * std::exp(-d * d) * (1.0 - sigma);
    return std::min(s, 1.0);
}

} // namespace

WaveformRecord gen_abp(const SynthConfig& cfg, int subject_index) {
    cfg.validate();
    Rng rng(cfg.seed + static_cast<std::uint64_t>(subject_index));
    std::size_t n = static_cast<std::size_t>(std::llround(cfg.seconds_per_subject * cfg.fs));

    double sbp, dbp;
    if (cfg.fixed_sbp > 0.0 && cfg.fixed_dbp > 0.0) {
        sbp = cfg.fixed_sbp;
        dbp = cfg.fixed_dbp;
    } else {
        do {
            sbp = rng.uniform(cfg.sbp_min, cfg.sbp_max);
            dbp = rng.uniform(cfg.dbp_min, cfg.dbp_max);
        } while (!(sbp > dbp + 20.0));
    }

    double drift_phase = rng.uniform(0.0, 2.0 * kPi);
    auto drift_at = [&](std::size_t k) {
        if (cfg.abp_drift_mmhg <= 0.0) return 0.0;
        double t = static_cast<double>(k) / cfg.fs;
        return cfg.abp_drift_mmhg * std::sin(2.0 * kPi * t / 60.0 + drift_phase);
    };

    std::vector<double> hr = rate_walk(rng, n, cfg.fs, cfg.hr_min, cfg.hr_max, 2.0, cfg.fixed_hr_bpm);
    std::vector<std::size_t> beats = beats_from_rate(hr, cfg.fs);

    // Per-sample normalized shape, then scaled into pressure units.
    std::vector<double> shape(n, 0.0);
    for (std::size_t b = 0; b + 1 < beats.size(); ++b) {
        std::size_t lo = beats[b], hi = beats[b + 1];
        double span = static_cast<double>(hi - lo);
        for (std::size_t k = lo; k < hi && k < n; ++k)
            shape[k] = abp_shape(static_cast<double>(k - lo) / span);
    }

    std::vector<double> abp(n);
    double pulse = sbp - dbp;
    for (std::size_t k = 0; k < n; ++k) abp[k] = dbp + drift_at(k) + pulse * shape[k];

    // PPG: same pulse train, delayed, per-beat jitter, then normalized.
    std::vector<double> jit(n, 1.0);
    for (std::size_t b = 0; b + 1 < beats.size(); ++b) {
        double a = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
        for (std::size_t k = beats[b]; k < beats[b + 1] && k < n; ++k) jit[k] = a;
    }
    int delay = static_cast<int>(std::lround(cfg.abp_ppg_delay_s * cfg.fs));
    std::vector<double> ppg_raw(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(k) - delay;
        if (src < 0) continue;
        std::size_t s = static_cast<std::size_t>(src);
        ppg_raw[k] = dbp + drift_at(s) + pulse * jit[s] * shape[s];
    }
    for (auto& v : ppg_raw) v += 0.01 * pulse * rng.normal();
    std::vector<double> ppg = standardize_unit(ppg_raw);

    WaveformRecord rec;
    rec.subject_id = "subject_" + std::to_string(subject_index);
    rec.task = Task::ABP;
    rec.sample_rate_hz = cfg.fs;
    rec.channels.push_back({"ppg", to_f32(ppg)});
    rec.channels.push_back({"abp", to_f32(abp)});
    return rec;
}

WaveformRecord generate(const SynthConfig& cfg, int subject_index) {
    switch (cfg.task) {
        case Task::ECG: return gen_cardiac(cfg, subject_index);
        case Task::RESP: return gen_resp(cfg, subject_index);
        case Task::ABP: return gen_abp(cfg, subject_index);
    }
    throw std::invalid_argument("generate: bad task");
}

} // namespace penguin
