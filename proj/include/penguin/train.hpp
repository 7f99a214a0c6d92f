#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "penguin/flow.hpp"
#include "penguin/model.hpp"
#include "penguin/params.hpp"
#include "penguin/waveform.hpp"

namespace penguin {

// Reverse-mode gradient of a scalar loss built on a tape. The builder
// receives the tape and a parameter binder and returns the loss node.
// Throws TrainError (naming the parameter) on non-finite loss or gradient.
template <typename T, typename Builder>
std::pair<double, GradMap<T>> gradient(const ParamStore<T>& params, Builder&& build) {
    Tape<T> tape(true);
    ParamBinder<T> binder(tape, params);
    typename Tape<T>::NodeId loss = build(tape, binder);
    double loss_value = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(loss_value)) throw TrainError("gradient: non-finite loss");
    tape.backward(loss);
    GradMap<T> grads = make_grad_map(params);
    binder.harvest(grads, T(1));
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (const T& v : grads[i].data)
            if (!std::isfinite(static_cast<double>(v)))
                throw TrainError("gradient: non-finite gradient for parameter '" +
                                 params.name(static_cast<int>(i)) + "'");
    return {loss_value, std::move(grads)};
}

struct AdamWParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay: p -= lr * (m_hat/(sqrt(v_hat)+eps) + wd*p).
template <typename T>
class AdamW {
public:
    AdamW(const ParamStore<T>& params, AdamWParams hp);
    void step(ParamStore<T>& params, const GradMap<T>& grads);
    int step_count() const { return step_; }

private:
    AdamWParams hp_;
    int step_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 64;
    int max_epochs = 300;
    int patience = 10;
    double weight_decay = 0.01;
    double grad_clip = 1.0; // global norm; 0 disables
    std::uint64_t seed = 0;
    int threads = 1;
    bool use_film = true;
    bool use_scale = true;
    bool use_ppg_cond = true;
    TargetAffine target_affine; // maps targets into model units
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

template <typename T>
struct TrainResult {
    ParamStore<T> best_params;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val = 0.0;
};

// Stop once `patience` epochs pass without a strictly better validation loss.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}
    bool observe(int epoch, double val_loss) {
        if (!seen_ || val_loss < best_val_) {
            best_val_ = val_loss;
            best_epoch_ = epoch;
            seen_ = true;
        }
        return epoch - best_epoch_ >= patience_;
    }
    int best_epoch() const { return best_epoch_; }
    double best_val() const { return best_val_; }

private:
    int patience_;
    bool seen_ = false;
    int best_epoch_ = 0;
    double best_val_ = 0.0;
};

// Epoch loop: deterministic reshuffle by (seed, epoch), minibatches with the
// last partial batch kept, per-element CFM gradients accumulated in element
// order, optional global-norm clipping, AdamW update. Validation reuses one
// frozen set of (t, x0) draws so losses are comparable across epochs.
template <typename T>
TrainResult<T> train(PenguinModel<T>& model, const std::vector<WindowPair>& train_pairs,
                     const std::vector<WindowPair>& val_pairs, const TrainConfig& cfg,
                     const std::function<void(const EpochStats&)>& on_epoch = {});

// (i) full, (ii) no FiLM, (iii) no scale, (iv) no PPG conditioning.
std::vector<TrainConfig> ablation_variants(const TrainConfig& base);

template <typename T>
VelocityFn<T> make_velocity(const PenguinModel<T>& model);

std::string history_to_csv(const std::vector<EpochStats>& history);

// ---- finite-difference gradient check -------------------------------------

struct GradCheckProbe {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckProbe> probes;
    std::map<std::string, double> family_max; // family -> max rel err
    GradCheckProbe worst;
    bool pass = false;
};

// Parameter family for reporting (conv, film_gen, scale_gen, lambda, delta,
// B, C, D, ffn, head, cond_proj, temb_mlp, norm).
std::string param_family(const std::string& name);

// 64-bit check on a tiny model (L=1, n=8, m=8, K=32) against central
// differences with frozen (t, x0) noise; `sabotage` flips the sign of one
// family's analytic gradients as a negative control.
GradCheckReport gradcheck_tiny_model(std::uint64_t seed, bool sabotage = false);

} // namespace penguin
