#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "penguin/common.hpp"

namespace penguin {

enum class Task : std::uint8_t { ECG = 0, RESP = 1, ABP = 2 };

std::string task_name(Task t);
Task task_from_name(std::string_view name);

// Default target channel label for each task ("ecg", "resp", "abp").
std::string task_target_label(Task t);

struct Channel {
    std::string label;
    std::vector<float> samples;
};

// A labeled multi-channel sampled signal; the unit of ingestion and splitting.
// All channels share one length and one sample rate.
struct WaveformRecord {
    std::string subject_id;
    Task task = Task::ECG;
    double sample_rate_hz = 0.0;
    std::vector<Channel> channels;

    std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().samples.size(); }
    const Channel* find_channel(std::string_view label) const;
    Channel* find_channel(std::string_view label);

    // Throws FormatError on any invariant violation (length mismatch,
    // non-positive rate, duplicate labels, non-finite samples).
    void validate() const;
};

bool operator==(const WaveformRecord& a, const WaveformRecord& b);

struct DatasetSplit {
    std::vector<std::string> train_subjects;
    std::vector<std::string> val_subjects;
    std::vector<std::string> test_subjects;
};

// An aligned (PPG window, target window) pair cut from one record;
// the unit of training and sampling.
struct WindowPair {
    std::vector<float> ppg;
    std::vector<float> target;
    std::string subject_id;
    std::size_t start_index = 0;
};

// VSR1 container, little-endian. Round-trips bit-exactly with read_record.
void write_record(const WaveformRecord& record, const std::string& path);
WaveformRecord read_record(const std::string& path);

// Comma-separated numeric columns with one header row; one channel per
// requested label, rows become samples in order.
WaveformRecord read_delimited_text(const std::string& path, double sample_rate_hz,
                                   const std::vector<std::string>& column_labels,
                                   const std::string& subject_id, Task task);

// Deterministic shuffle by seed, then contiguous partition. Val and test
// each get max(1, round(share)); train keeps the remainder.
DatasetSplit split_subjects(const std::vector<std::string>& subject_ids,
                            std::array<int, 3> ratio, std::uint64_t seed);

// Windows start at 0, stride, 2*stride, ...; the trailing partial window
// is dropped. Both channels are cut from identical sample ranges.
std::vector<WindowPair> window_pairs(const WaveformRecord& record, std::string_view ppg_label,
                                     std::string_view target_label, std::size_t k,
                                     std::size_t stride);

} // namespace penguin
