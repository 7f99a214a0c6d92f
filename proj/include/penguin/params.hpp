#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "penguin/autodiff.hpp"
#include "penguin/tensor.hpp"

namespace penguin {

// Ordered name -> tensor map; iteration follows registration order so
// checkpoints, gradient accumulation, and optimizer state stay aligned.
template <typename T>
class ParamStore {
public:
    int add(std::string name, Tensor<T> value);
    int index_of(std::string_view name) const; // -1 when absent
    bool has(std::string_view name) const { return index_of(name) >= 0; }

    std::size_t count() const { return entries_.size(); }
    const std::string& name(int i) const { return entries_[static_cast<std::size_t>(i)].name; }
    Tensor<T>& value(int i) { return entries_[static_cast<std::size_t>(i)].value; }
    const Tensor<T>& value(int i) const { return entries_[static_cast<std::size_t>(i)].value; }
    Tensor<T>& value(std::string_view name);
    const Tensor<T>& value(std::string_view name) const;

    std::size_t total_elements() const;

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
        return out;
    }

private:
    struct Entry {
        std::string name;
        Tensor<T> value;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Gradients aligned with ParamStore indices; tensors stay empty until the
// parameter receives gradient.
template <typename T>
using GradMap = std::vector<Tensor<T>>;

template <typename T>
GradMap<T> make_grad_map(const ParamStore<T>& params);

// Lazily binds parameters to tape leaves; after backward, harvest()
// accumulates scaled leaf gradients back into a GradMap.
template <typename T>
class ParamBinder {
public:
    ParamBinder(Tape<T>& tape, const ParamStore<T>& store) : tape_(tape), store_(store) {
        ids_.assign(store.count(), -1);
    }

    typename Tape<T>::NodeId node(int param_index) {
        auto& id = ids_[static_cast<std::size_t>(param_index)];
        if (id < 0) id = tape_.leaf(store_.value(param_index));
        return id;
    }

    typename Tape<T>::NodeId node(std::string_view name) {
        int idx = store_.index_of(name);
        if (idx < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
        return node(idx);
    }

    void harvest(GradMap<T>& out, T scale) const;

private:
    Tape<T>& tape_;
    const ParamStore<T>& store_;
    std::vector<typename Tape<T>::NodeId> ids_;
};

// PGW1 checkpoint container: named f32 tensors plus a config text snapshot.
void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_text);
std::pair<ParamStore<float>, std::string> load_checkpoint(const std::string& path);

} // namespace penguin
