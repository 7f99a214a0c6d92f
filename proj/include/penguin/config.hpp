#pragma once

#include <string>
#include <vector>

#include "penguin/flow.hpp"
#include "penguin/model.hpp"
#include "penguin/train.hpp"
#include "penguin/waveform.hpp"

namespace penguin {

// Flat dotted-key configuration with documented defaults. Precedence is
// built-in defaults < config file < explicit set() calls; unknown keys and
// unparsable values are rejected.
class RunConfig {
public:
    struct KeySpec {
        const char* key;
        const char* type; // "int" | "double" | "bool" | "string"
        const char* default_value;
        const char* doc;
    };
    static const std::vector<KeySpec>& schema();

    static RunConfig defaults();
    // Parses "key = value" lines with '#' comments.
    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& where);

    void set(const std::string& key, const std::string& value);
    // "key=value" form used by --set flags.
    void set_kv(const std::string& assignment);

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Canonical "key = value" lines in schema order.
    std::string serialize() const;

    ModelConfig model_config() const;
    TrainConfig train_config() const;
    SamplerConfig sampler_config() const;
    TargetAffine target_affine() const;
    Task data_task() const;
    std::string data_ppg_label() const;
    std::string data_target_label() const; // defaults to the task's label
    // 0 = auto (K/2 for training, K for evaluation).
    int data_stride() const;

private:
    std::vector<std::string> values_; // aligned with schema order
    static int key_index(const std::string& key);
};

} // namespace penguin
