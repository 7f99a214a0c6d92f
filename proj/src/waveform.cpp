#include "penguin/waveform.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace penguin {

std::string task_name(Task t) {
    switch (t) {
        case Task::ECG: return "ecg";
        case Task::RESP: return "resp";
        case Task::ABP: return "abp";
    }
    throw std::invalid_argument("task_name: bad task value");
}

Task task_from_name(std::string_view name) {
    if (name == "ecg") return Task::ECG;
    if (name == "resp") return Task::RESP;
    if (name == "abp") return Task::ABP;
    throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected ecg|resp|abp)");
}

std::string task_target_label(Task t) { return task_name(t); }

const Channel* WaveformRecord::find_channel(std::string_view label) const {
    for (const auto& c : channels)
        if (c.label == label) return &c;
    return nullptr;
}

Channel* WaveformRecord::find_channel(std::string_view label) {
    for (auto& c : channels)
        if (c.label == label) return &c;
    return nullptr;
}

void WaveformRecord::validate() const {
    if (!(sample_rate_hz > 0.0))
        throw FormatError("record '" + subject_id + "': sample_rate_hz must be positive");
    std::set<std::string> labels;
    std::size_t n = n_samples();
    for (const auto& c : channels) {
        if (!labels.insert(c.label).second)
            throw FormatError("record '" + subject_id + "': duplicate channel label '" + c.label + "'");
        if (c.samples.size() != n)
            throw FormatError("record '" + subject_id + "': channel '" + c.label +
                              "' length mismatch");
        for (float v : c.samples)
            if (!std::isfinite(v))
                throw FormatError("record '" + subject_id + "': non-finite sample in channel '" +
                                  c.label + "'");
    }
}

bool operator==(const WaveformRecord& a, const WaveformRecord& b) {
    if (a.subject_id != b.subject_id || a.task != b.task || a.sample_rate_hz != b.sample_rate_hz ||
        a.channels.size() != b.channels.size())
        return false;
    for (std::size_t i = 0; i < a.channels.size(); ++i) {
        if (a.channels[i].label != b.channels[i].label) return false;
        const auto& s = a.channels[i].samples;
        const auto& t = b.channels[i].samples;
        if (s.size() != t.size()) return false;
        if (!s.empty() && std::memcmp(s.data(), t.data(), s.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

namespace {

constexpr char kMagic[4] = {'V', 'S', 'R', '1'};
constexpr std::uint16_t kFormatVersion = 1;

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw FormatError(where + ": truncated file (need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos) + ")");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return ss.str();
}

} // namespace

void write_record(const WaveformRecord& record, const std::string& path) {
    record.validate();
    if (record.channels.size() > 255)
        throw FormatError("write_record: more than 255 channels");
    if (record.subject_id.size() > 65535)
        throw FormatError("write_record: subject_id too long");

    std::string out;
    out.reserve(64 + record.channels.size() * (16 + record.n_samples() * 4));
    out.append(kMagic, 4);
    put_u16(out, kFormatVersion);
    put_u8(out, static_cast<std::uint8_t>(record.task));
    put_f64(out, record.sample_rate_hz);
    put_u16(out, static_cast<std::uint16_t>(record.subject_id.size()));
    out.append(record.subject_id);
    put_u8(out, static_cast<std::uint8_t>(record.channels.size()));
    for (const auto& c : record.channels) {
        if (c.label.size() > 65535) throw FormatError("write_record: channel label too long");
        put_u16(out, static_cast<std::uint16_t>(c.label.size()));
        out.append(c.label);
    }
    put_u64(out, record.n_samples());
    for (const auto& c : record.channels)
        for (float v : c.samples) put_f32(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failure on '" + path + "'");
}

WaveformRecord read_record(const std::string& path) {
    std::string buf = read_file(path);
    Cursor c{buf, 0, path};

    std::string magic = c.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError(path + ": bad magic (not a VSR1 file)");
    std::uint16_t version = c.u16();
    if (version != kFormatVersion)
        throw FormatError(path + ": unsupported VSR version " + std::to_string(version));

    WaveformRecord rec;
    std::uint8_t task = c.u8();
    if (task > 2) throw FormatError(path + ": bad task byte " + std::to_string(task));
    rec.task = static_cast<Task>(task);
    rec.sample_rate_hz = c.f64();
    rec.subject_id = c.str(c.u16());
    std::uint8_t n_channels = c.u8();
    rec.channels.resize(n_channels);
    for (auto& ch : rec.channels) ch.label = c.str(c.u16());
    std::uint64_t n_samples = c.u64();
    std::uint64_t remaining = buf.size() - c.pos;
    if (n_channels > 0 && n_samples > remaining / 4 / n_channels)
        throw FormatError(path + ": declared n_samples=" + std::to_string(n_samples) +
                          " exceeds payload size");
    for (auto& ch : rec.channels) {
        ch.samples.resize(n_samples);
        for (auto& v : ch.samples) {
            v = c.f32();
            if (std::isnan(v))
                throw FormatError(path + ": NaN sample in channel '" + ch.label + "'");
        }
    }
    if (c.pos != buf.size())
        throw FormatError(path + ": trailing bytes after payload");
    rec.validate();
    return rec;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

} // namespace

WaveformRecord read_delimited_text(const std::string& path, double sample_rate_hz,
                                   const std::vector<std::string>& column_labels,
                                   const std::string& subject_id, Task task) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file (missing header row)");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trimmed(h);

    std::vector<std::size_t> col_index;
    for (const auto& label : column_labels) {
        auto it = std::find(header.begin(), header.end(), label);
        if (it == header.end())
            throw SchemaError(path + ": missing column '" + label + "'");
        col_index.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    WaveformRecord rec;
    rec.subject_id = subject_id;
    rec.task = task;
    rec.sample_rate_hz = sample_rate_hz;
    rec.channels.resize(column_labels.size());
    for (std::size_t i = 0; i < column_labels.size(); ++i) rec.channels[i].label = column_labels[i];

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trimmed(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        for (std::size_t i = 0; i < col_index.size(); ++i) {
            if (col_index[i] >= cells.size())
                throw FormatError(path + ": row " + std::to_string(row) + " has too few columns");
            std::string cell = trimmed(cells[col_index[i]]);
            double value = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(value))
                throw FormatError(path + ": row " + std::to_string(row) + ", column '" +
                                  column_labels[i] + "': cannot parse '" + cell + "' as a number");
            rec.channels[i].samples.push_back(static_cast<float>(value));
        }
    }
    rec.validate();
    return rec;
}

DatasetSplit split_subjects(const std::vector<std::string>& subject_ids,
                            std::array<int, 3> ratio, std::uint64_t seed) {
    if (ratio[0] <= 0 || ratio[1] <= 0 || ratio[2] <= 0)
        throw std::invalid_argument("split_subjects: ratio parts must be positive");
    std::size_t n = subject_ids.size();
    if (n < 3)
        throw std::invalid_argument("split_subjects: need at least 3 subjects for a 3-way split, got " +
                                    std::to_string(n));
    {
        std::set<std::string> uniq(subject_ids.begin(), subject_ids.end());
        if (uniq.size() != n) throw std::invalid_argument("split_subjects: duplicate subject ids");
    }

    std::vector<std::string> order = subject_ids;
    Rng rng(seed);
    shuffle(order, rng);

    double total = static_cast<double>(ratio[0] + ratio[1] + ratio[2]);
    auto share = [&](int part) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio[part] / total)));
    };
    std::size_t n_val = share(1);
    std::size_t n_test = share(2);
    if (n_val + n_test >= n)
        throw std::invalid_argument("split_subjects: not enough subjects for non-empty train split");
    std::size_t n_train = n - n_val - n_test;

    DatasetSplit split;
    split.train_subjects.assign(order.begin(), order.begin() + n_train);
    split.val_subjects.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    split.test_subjects.assign(order.begin() + n_train + n_val, order.end());
    return split;
}

std::vector<WindowPair> window_pairs(const WaveformRecord& record, std::string_view ppg_label,
                                     std::string_view target_label, std::size_t k,
                                     std::size_t stride) {
    const Channel* ppg = record.find_channel(ppg_label);
    if (!ppg) throw SchemaError("window_pairs: missing channel '" + std::string(ppg_label) + "'");
    const Channel* target = record.find_channel(target_label);
    if (!target)
        throw SchemaError("window_pairs: missing channel '" + std::string(target_label) + "'");
    if (k == 0) throw std::invalid_argument("window_pairs: K must be positive");
    if (stride == 0) throw std::invalid_argument("window_pairs: stride must be positive");
    std::size_t n = record.n_samples();
    if (k > n)
        throw std::invalid_argument("window_pairs: K=" + std::to_string(k) + " exceeds n_samples=" +
                                    std::to_string(n));

    std::vector<WindowPair> out;
    out.reserve((n - k) / stride + 1);
    for (std::size_t start = 0; start + k <= n; start += stride) {
        WindowPair p;
        p.subject_id = record.subject_id;
        p.start_index = start;
        p.ppg.assign(ppg->samples.begin() + start, ppg->samples.begin() + start + k);
        p.target.assign(target->samples.begin() + start, target->samples.begin() + start + k);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace penguin
