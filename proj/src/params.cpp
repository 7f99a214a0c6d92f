#include "penguin/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "penguin/common.hpp"

namespace penguin {

template <typename T>
int ParamStore<T>::add(std::string name, Tensor<T> value) {
    if (index_.count(name))
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    int idx = static_cast<int>(entries_.size());
    index_.emplace(name, idx);
    entries_.push_back(Entry{std::move(name), std::move(value)});
    return idx;
}

template <typename T>
int ParamStore<T>::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? -1 : it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::value(std::string_view name) {
    int idx = index_of(name);
    if (idx < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return value(idx);
}

template <typename T>
const Tensor<T>& ParamStore<T>::value(std::string_view name) const {
    int idx = index_of(name);
    if (idx < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return value(idx);
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

template <typename T>
GradMap<T> make_grad_map(const ParamStore<T>& params) {
    return GradMap<T>(params.count());
}

template <typename T>
void ParamBinder<T>::harvest(GradMap<T>& out, T scale) const {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i] < 0) continue;
        const Tensor<T>& g = tape_.grad(ids_[i]);
        Tensor<T>& dst = out[i];
        if (dst.data.empty()) dst = Tensor<T>(store_.value(static_cast<int>(i)).shape);
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += scale * g[j];
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template GradMap<float> make_grad_map<float>(const ParamStore<float>&);
template GradMap<double> make_grad_map<double>(const ParamStore<double>&);
template class ParamBinder<float>;
template class ParamBinder<double>;

namespace {

constexpr char kMagic[4] = {'P', 'G', 'W', '1'};

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError(where + ": truncated checkpoint");
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
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_text) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(params.count()));
    for (int i = 0; i < static_cast<int>(params.count()); ++i) {
        const std::string& name = params.name(i);
        const Tensor<float>& t = params.value(i);
        if (name.size() > 65535) throw FormatError("checkpoint: tensor name too long");
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        put_u8(out, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d = 0; d < t.rank(); ++d)
            put_u32(out, static_cast<std::uint32_t>(t.shape[d]));
        for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    put_u32(out, static_cast<std::uint32_t>(config_text.size()));
    out.append(config_text);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failure on '" + path + "'");
}

std::pair<ParamStore<float>, std::string> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();

    Cursor c{buf, 0, path};
    if (c.str(4) != std::string(kMagic, 4))
        throw FormatError(path + ": bad magic (not a PGW1 checkpoint)");
    std::uint32_t count = c.u32();

    ParamStore<float> params;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = c.str(c.u16());
        std::uint8_t rank = c.u8();
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = c.u32();
            if (d != 0 && numel > (buf.size() / 4) / d)
                throw FormatError(path + ": tensor dims exceed payload");
            numel *= d;
        }
        Tensor<float> t(shape);
        c.need(numel * 4);
        for (std::size_t j = 0; j < numel; ++j)
            t[j] = std::bit_cast<float>(c.u32());
        params.add(std::move(name), std::move(t));
    }
    std::string config_text = c.str(c.u32());
    if (c.pos != buf.size()) throw FormatError(path + ": trailing bytes after config block");
    return {std::move(params), std::move(config_text)};
}

} // namespace penguin
