#include "penguin/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace penguin {

const std::vector<RunConfig::KeySpec>& RunConfig::schema() {
    static const std::vector<KeySpec> s = {
        {"model.depth", "int", "4", "number of Flow-SSM blocks (L)"},
        {"model.embed_dim", "int", "128", "embedding dimension (n)"},
        {"model.state_dim", "int", "256", "latent state dimension (m, real-equivalent)"},
        {"model.window", "int", "1024", "window length in samples (K)"},
        {"model.ffn_expansion", "int", "2", "FFN hidden width multiplier"},
        {"model.temb_dim", "int", "0", "timestep embedding dim (0 = embed_dim)"},
        {"model.use_film", "bool", "true", "FiLM conditioning on t"},
        {"model.use_scale", "bool", "true", "scaling conditioning on t"},
        {"model.use_ppg_cond", "bool", "true", "per-timestep PPG conditioning"},
        {"train.lr", "double", "0.001", "AdamW learning rate"},
        {"train.batch_size", "int", "64", "minibatch size"},
        {"train.max_epochs", "int", "300", "maximum training epochs"},
        {"train.patience", "int", "10", "early-stopping patience in epochs"},
        {"train.weight_decay", "double", "0.01", "decoupled weight decay"},
        {"train.grad_clip", "double", "1.0", "global gradient-norm clip (0 = off)"},
        {"train.seed", "int", "0", "training seed"},
        {"sample.steps", "int", "25", "ODE sampling steps"},
        {"sample.seed", "int", "0", "sampling seed"},
        {"sample.target_affine_scale", "double", "1", "model-units scale for targets"},
        {"sample.target_affine_offset", "double", "0", "model-units offset for targets"},
        {"data.task", "string", "ecg", "task: ecg | resp | abp"},
        {"data.dir", "string", "", "data directory"},
        {"data.ppg_label", "string", "ppg", "conditioning channel label"},
        {"data.target_label", "string", "", "target channel label ('' = task default)"},
        {"data.stride", "int", "0", "training window stride (0 = window/2)"},
    };
    return s;
}

int RunConfig::key_index(const std::string& key) {
    const auto& s = schema();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (key == s[i].key) return static_cast<int>(i);
    return -1;
}

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    for (const auto& spec : schema()) cfg.values_.emplace_back(spec.default_value);
    return cfg;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0") {
        out = false;
        return true;
    }
    return false;
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    int idx = key_index(key);
    if (idx < 0) throw std::invalid_argument("unknown config key '" + key + "'");
    const KeySpec& spec = schema()[static_cast<std::size_t>(idx)];
    std::string v = trim(value);
    std::string type = spec.type;
    if (type == "int") {
        int parsed = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (ec != std::errc() || p != v.data() + v.size())
            throw std::invalid_argument("config key '" + key + "': expected integer, got '" + v + "'");
    } else if (type == "double") {
        double parsed = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(parsed))
            throw std::invalid_argument("config key '" + key + "': expected number, got '" + v + "'");
    } else if (type == "bool") {
        bool parsed = false;
        if (!parse_bool(v, parsed))
            throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + v +
                                        "'");
        v = parsed ? "true" : "false";
    }
    values_[static_cast<std::size_t>(idx)] = v;
}

void RunConfig::set_kv(const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& where) {
    RunConfig cfg = defaults();
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(where + ":" + std::to_string(line_no) +
                                        ": expected 'key = value'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
}

const std::string& RunConfig::get(const std::string& key) const {
    int idx = key_index(key);
    if (idx < 0) throw std::invalid_argument("unknown config key '" + key + "'");
    return values_[static_cast<std::size_t>(idx)];
}

int RunConfig::get_int(const std::string& key) const {
    return std::stoi(get(key));
}

double RunConfig::get_double(const std::string& key) const {
    return std::stod(get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
    return get(key) == "true" || get(key) == "1";
}

std::string RunConfig::serialize() const {
    std::string out;
    const auto& s = schema();
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += s[i].key;
        out += " = ";
        out += values_[i];
        out += "\n";
    }
    return out;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig cfg;
    cfg.depth = get_int("model.depth");
    cfg.embed_dim = get_int("model.embed_dim");
    cfg.state_dim = get_int("model.state_dim");
    cfg.window = get_int("model.window");
    cfg.ffn_expansion = get_int("model.ffn_expansion");
    cfg.temb_dim = get_int("model.temb_dim");
    cfg.use_film = get_bool("model.use_film");
    cfg.use_scale = get_bool("model.use_scale");
    cfg.use_ppg_cond = get_bool("model.use_ppg_cond");
    return cfg;
}

TargetAffine RunConfig::target_affine() const {
    TargetAffine affine;
    affine.scale = get_double("sample.target_affine_scale");
    affine.offset = get_double("sample.target_affine_offset");
    if (affine.scale == 0.0)
        throw std::invalid_argument("sample.target_affine_scale must be non-zero");
    return affine;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig cfg;
    cfg.lr = get_double("train.lr");
    cfg.batch_size = get_int("train.batch_size");
    cfg.max_epochs = get_int("train.max_epochs");
    cfg.patience = get_int("train.patience");
    cfg.weight_decay = get_double("train.weight_decay");
    cfg.grad_clip = get_double("train.grad_clip");
    cfg.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    cfg.use_film = get_bool("model.use_film");
    cfg.use_scale = get_bool("model.use_scale");
    cfg.use_ppg_cond = get_bool("model.use_ppg_cond");
    cfg.target_affine = target_affine();
    return cfg;
}

SamplerConfig RunConfig::sampler_config() const {
    SamplerConfig cfg;
    cfg.steps = get_int("sample.steps");
    cfg.seed = static_cast<std::uint64_t>(get_int("sample.seed"));
    cfg.target_affine = target_affine();
    return cfg;
}

Task RunConfig::data_task() const { return task_from_name(get("data.task")); }

std::string RunConfig::data_ppg_label() const { return get("data.ppg_label"); }

std::string RunConfig::data_target_label() const {
    std::string label = get("data.target_label");
    return label.empty() ? task_target_label(data_task()) : label;
}

int RunConfig::data_stride() const { return get_int("data.stride"); }

} // namespace penguin
