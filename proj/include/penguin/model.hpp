#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "penguin/autodiff.hpp"
#include "penguin/params.hpp"
#include "penguin/tensor.hpp"

namespace penguin {

struct ModelConfig {
    int depth = 4;        // L
    int embed_dim = 128;  // n
    int state_dim = 256;  // m (real-equivalent; m/2 conjugate pairs)
    int window = 1024;    // K
    int ffn_expansion = 2;
    int temb_dim = 0; // 0 = follow embed_dim
    bool use_film = true;
    bool use_scale = true;
    bool use_ppg_cond = true;

    static constexpr int kConvKernel = 7;

    int temb() const { return temb_dim > 0 ? temb_dim : embed_dim; }
    void validate() const;
};

// Velocity network: dual conv embeddings, sinusoidal timestep encoding
// through a 2-layer MLP, a stack of dual-stream blocks (x-stream:
// norm -> FiLM -> per-timestep PPG addition -> S5 -> scale -> residual,
// then FFN; z-stream: norm -> S5 -> residual, then FFN), and a
// norm + affine head back to one channel.
template <typename T>
struct PenguinModel {
    ModelConfig cfg;
    ParamStore<T> params;
};

template <typename T>
PenguinModel<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

// t scaled by 1000 inside the encoding so [0,1] spans a useful band:
// entry 2i = sin(t*1000 / 10000^(2i/dim)), entry 2i+1 = cos(same).
template <typename T>
std::vector<T> sinusoidal_encode(double t, std::size_t dim);

// out[k,:] = gamma (.) h[k,:] + beta.
template <typename T>
Tensor<T> film_modulate(const Tensor<T>& h, const std::vector<T>& gamma,
                        const std::vector<T>& beta);

// Full forward on a tape; x_t and z are length-K windows, returns the
// {K, 1} velocity node.
template <typename T>
typename Tape<T>::NodeId model_forward_tape(Tape<T>& tape, ParamBinder<T>& binder,
                                            const PenguinModel<T>& model, const std::vector<T>& x_t,
                                            const std::vector<T>& z, double t);

// Inference-only forward.
template <typename T>
std::vector<T> model_forward(const PenguinModel<T>& model, const std::vector<T>& x_t,
                             const std::vector<T>& z, double t);

// One block applied to explicit stream states {K, n}; temb is the
// post-MLP timestep embedding of length temb().
template <typename T>
std::pair<Tensor<T>, Tensor<T>> block_forward(const PenguinModel<T>& model, int block_index,
                                              const Tensor<T>& hx, const Tensor<T>& hz,
                                              const std::vector<T>& temb);

} // namespace penguin
