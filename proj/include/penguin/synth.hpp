#pragma once

#include <cstdint>

#include "penguin/waveform.hpp"

namespace penguin {

// Paired synthetic (PPG, vital-sign) records with known ground truth, for
// desk-scale training and metric-oracle validation. All generators are
// pure in (config, subject_index): per-subject RNG = seed + subject.
struct SynthConfig {
    Task task = Task::ECG;
    int n_subjects = 8;
    double seconds_per_subject = 300.0;
    double fs = 128.0;

    double hr_min = 50.0, hr_max = 120.0;    // bpm
    double rr_min = 6.0, rr_max = 30.0;      // breaths/min
    double sbp_min = 90.0, sbp_max = 160.0;  // mmHg
    double dbp_min = 55.0, dbp_max = 95.0;   // mmHg
    std::uint64_t seed = 0;

    // Generation knobs (defaults match the documented behavior; the fixed_*
    // overrides pin latent rates for oracle tests, 0 = disabled).
    double fixed_hr_bpm = 0.0;
    double fixed_rr_bpm = 0.0;
    double fixed_sbp = 0.0, fixed_dbp = 0.0;
    double resp_mod_depth = 0.3;
    double resp_baseline = 0.2;
    double abp_drift_mmhg = 5.0;
    double ecg_noise = 0.01;
    double ppg_noise = 0.02;
    double ppg_delay_s = 0.2;      // PPG pulse lag behind the R peak
    double abp_ppg_delay_s = 0.15; // PPG lag behind the ABP pulse

    void validate() const;
};

// Channels "ppg", "ecg": impulses smoothed with a 20 ms Gaussian at beat
// times from a bounded heart-rate walk; PPG is the same beat train delayed
// 200 ms through an asymmetric 300 ms pulse kernel with amplitude jitter.
WaveformRecord gen_cardiac(const SynthConfig& cfg, int subject_index);

// Channels "ppg", "resp": unit sine at the instantaneous respiratory phase;
// PPG is a cardiac pulse train amplitude-modulated by (1 + depth*resp) and
// baseline-shifted by baseline*resp.
WaveformRecord gen_resp(const SynthConfig& cfg, int subject_index);

// Channels "ppg", "abp": per-beat pressure pulse spanning [DBP, SBP] with a
// dicrotic bump and slow drift; PPG is the normalized, delayed, jittered
// version of the same pulse train.
WaveformRecord gen_abp(const SynthConfig& cfg, int subject_index);

WaveformRecord generate(const SynthConfig& cfg, int subject_index); // dispatch by task

} // namespace penguin
