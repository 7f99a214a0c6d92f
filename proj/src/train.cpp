#include "penguin/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <thread>

namespace penguin {

template <typename T>
AdamW<T>::AdamW(const ParamStore<T>& params, AdamWParams hp) : hp_(hp) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (int i = 0; i < static_cast<int>(params.count()); ++i) {
        m_.emplace_back(params.value(i).shape);
        v_.emplace_back(params.value(i).shape);
    }
}

template <typename T>
void AdamW<T>::step(ParamStore<T>& params, const GradMap<T>& grads) {
    if (grads.size() != m_.size()) throw ShapeError("adamw: gradient map size mismatch");
    ++step_;
    const T b1 = static_cast<T>(hp_.beta1);
    const T b2 = static_cast<T>(hp_.beta2);
    const T one_m_b1 = T(1) - b1;
    const T one_m_b2 = T(1) - b2;
    const T corr1 = static_cast<T>(1.0 / (1.0 - std::pow(hp_.beta1, step_)));
    const T corr2 = static_cast<T>(1.0 / (1.0 - std::pow(hp_.beta2, step_)));
    const T lr = static_cast<T>(hp_.lr);
    const T eps = static_cast<T>(hp_.eps);
    const T wd = static_cast<T>(hp_.weight_decay);

    for (std::size_t i = 0; i < m_.size(); ++i) {
        Tensor<T>& p = params.value(static_cast<int>(i));
        Tensor<T>& m = m_[i];
        Tensor<T>& v = v_[i];
        const bool has_grad = !grads[i].data.empty();
        if (has_grad && !grads[i].same_shape(p)) throw ShapeError("adamw: gradient shape mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            T g = has_grad ? grads[i][j] : T(0);
            m[j] = b1 * m[j] + one_m_b1 * g;
            v[j] = b2 * v[j] + one_m_b2 * g * g;
            T m_hat = m[j] * corr1;
            T v_hat = v[j] * corr2;
            p[j] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * p[j]);
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

std::vector<TrainConfig> ablation_variants(const TrainConfig& base) {
    TrainConfig full = base;
    full.use_film = full.use_scale = full.use_ppg_cond = true;
    TrainConfig no_film = full;
    no_film.use_film = false;
    TrainConfig no_scale = full;
    no_scale.use_scale = false;
    TrainConfig no_ppg = full;
    no_ppg.use_ppg_cond = false;
    return {full, no_film, no_scale, no_ppg};
}

template <typename T>
VelocityFn<T> make_velocity(const PenguinModel<T>& model) {
    return [&model](const std::vector<T>& x_t, const std::vector<T>& z, double t) {
        return model_forward(model, x_t, z, t);
    };
}

template VelocityFn<float> make_velocity<float>(const PenguinModel<float>&);
template VelocityFn<double> make_velocity<double>(const PenguinModel<double>&);

std::string history_to_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
    char line[160];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss,
                      e.val_loss, e.lr, e.seconds);
        out += line;
    }
    return out;
}

namespace {

// One CFM element: forward + backward on its own tape, gradients scaled by
// `scale` into `grads`. Returns the element loss.
template <typename T>
double cfm_element_gradient(const PenguinModel<T>& model, const std::vector<T>& z,
                            const std::vector<T>& x1, double t, const std::vector<T>& x0,
                            GradMap<T>& grads, T scale) {
    std::size_t k = x1.size();
    std::vector<T> xt(k), u_target(k);
    T tt = static_cast<T>(t);
    T omt = static_cast<T>(1.0 - t);
    for (std::size_t i = 0; i < k; ++i) {
        xt[i] = omt * x0[i] + tt * x1[i];
        u_target[i] = x1[i] - x0[i];
    }
    Tape<T> tape(true);
    ParamBinder<T> binder(tape, model.params);
    auto pred = model_forward_tape(tape, binder, model, xt, z, t);
    auto loss = tape.mse(pred, Tensor<T>({k, 1}, std::move(u_target)));
    double loss_value = static_cast<double>(tape.value(loss)[0]);
    tape.backward(loss);
    binder.harvest(grads, scale);
    return loss_value;
}

template <typename T>
double cfm_element_loss(const PenguinModel<T>& model, const std::vector<T>& z,
                        const std::vector<T>& x1, double t, const std::vector<T>& x0) {
    std::size_t k = x1.size();
    std::vector<T> xt(k);
    T tt = static_cast<T>(t);
    T omt = static_cast<T>(1.0 - t);
    for (std::size_t i = 0; i < k; ++i) xt[i] = omt * x0[i] + tt * x1[i];
    std::vector<T> pred = model_forward(model, xt, z, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double d = static_cast<double>(pred[i]) -
                   (static_cast<double>(x1[i]) - static_cast<double>(x0[i]));
        acc += d * d;
    }
    return acc / static_cast<double>(k);
}

template <typename T>
void accumulate_grads(GradMap<T>& dst, const GradMap<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (src[i].data.empty()) continue;
        if (dst[i].data.empty()) {
            dst[i] = src[i];
        } else {
            for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
        }
    }
}

template <typename T>
void clip_global_norm(GradMap<T>& grads, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (const auto& g : grads)
        for (const T& v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
    double norm = std::sqrt(sq);
    if (norm <= clip) return;
    T scale = static_cast<T>(clip / norm);
    for (auto& g : grads)
        for (auto& v : g.data) v *= scale;
}

// Frozen validation noise: one (t, x0) draw per validation window.
template <typename T>
struct ValNoise {
    double t;
    std::vector<T> x0;
};

constexpr std::uint64_t kShuffleStream = 0x5A0F'F1E0ULL;
constexpr std::uint64_t kBatchNoiseStream = 0xBA7C'401EULL;
constexpr std::uint64_t kValNoiseStream = 0x7A11'DA7AULL;

} // namespace

template <typename T>
TrainResult<T> train(PenguinModel<T>& model, const std::vector<WindowPair>& train_pairs,
                     const std::vector<WindowPair>& val_pairs, const TrainConfig& cfg,
                     const std::function<void(const EpochStats&)>& on_epoch) {
    if (train_pairs.empty() || val_pairs.empty())
        throw std::invalid_argument("train: need non-empty train and val sets");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    model.cfg.use_film = cfg.use_film;
    model.cfg.use_scale = cfg.use_scale;
    model.cfg.use_ppg_cond = cfg.use_ppg_cond;

    const std::size_t n_train = train_pairs.size();
    const std::size_t n_val = val_pairs.size();

    // Window data in model units (targets through the affine).
    auto to_model_vec = [&](const std::vector<float>& v) {
        std::vector<T> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            out[i] = static_cast<T>(cfg.target_affine.to_model(static_cast<double>(v[i])));
        return out;
    };
    auto to_vec = [](const std::vector<float>& v) {
        return std::vector<T>(v.begin(), v.end());
    };

    std::vector<std::vector<T>> train_z(n_train), train_x1(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        train_z[i] = to_vec(train_pairs[i].ppg);
        train_x1[i] = to_model_vec(train_pairs[i].target);
    }
    std::vector<std::vector<T>> val_z(n_val), val_x1(n_val);
    std::vector<ValNoise<T>> val_noise(n_val);
    for (std::size_t i = 0; i < n_val; ++i) {
        val_z[i] = to_vec(val_pairs[i].ppg);
        val_x1[i] = to_model_vec(val_pairs[i].target);
        Rng rng(mix_seed(cfg.seed, kValNoiseStream + i));
        val_noise[i].t = rng.uniform();
        val_noise[i].x0.resize(val_x1[i].size());
        for (auto& v : val_noise[i].x0) v = static_cast<T>(rng.normal());
    }

    AdamWParams hp;
    hp.lr = cfg.lr;
    hp.weight_decay = cfg.weight_decay;
    AdamW<T> opt(model.params, hp);

    EarlyStopper stopper(cfg.patience);
    TrainResult<T> result;
    result.best_params = model.params;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t(0));

    const int workers = std::max(1, cfg.threads);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t_start = std::chrono::steady_clock::now();

        Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), std::size_t(0));
        shuffle(order, shuffle_rng);

        double epoch_loss_sum = 0.0;
        std::size_t pos = 0;
        int batch_index = 0;
        while (pos < n_train) {
            std::size_t batch = std::min<std::size_t>(cfg.batch_size, n_train - pos);
            std::vector<double> elem_loss(batch, 0.0);

            int w_count = static_cast<int>(std::min<std::size_t>(workers, batch));
            std::vector<GradMap<T>> partial(static_cast<std::size_t>(w_count));
            for (auto& p : partial) p = make_grad_map(model.params);

            auto run_range = [&](int w) {
                std::size_t begin = batch * static_cast<std::size_t>(w) / w_count;
                std::size_t end = batch * static_cast<std::size_t>(w + 1) / w_count;
                for (std::size_t e = begin; e < end; ++e) {
                    std::size_t idx = order[pos + e];
                    std::uint64_t counter =
                        static_cast<std::uint64_t>(epoch - 1) * n_train + pos + e;
                    Rng rng(mix_seed(cfg.seed, kBatchNoiseStream + counter));
                    double t = rng.uniform();
                    std::vector<T> x0(train_x1[idx].size());
                    for (auto& v : x0) v = static_cast<T>(rng.normal());
                    elem_loss[e] = cfm_element_gradient(model, train_z[idx], train_x1[idx], t, x0,
                                                        partial[static_cast<std::size_t>(w)],
                                                        static_cast<T>(1.0 / batch));
                }
            };
            if (w_count == 1) {
                run_range(0);
            } else {
                std::vector<std::thread> pool;
                for (int w = 1; w < w_count; ++w) pool.emplace_back(run_range, w);
                run_range(0);
                for (auto& th : pool) th.join();
            }

            GradMap<T>& grads = partial[0];
            for (int w = 1; w < w_count; ++w) accumulate_grads(grads, partial[static_cast<std::size_t>(w)]);

            double batch_loss = std::accumulate(elem_loss.begin(), elem_loss.end(), 0.0) /
                                static_cast<double>(batch);
            if (!std::isfinite(batch_loss))
                throw TrainError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index));
            epoch_loss_sum += batch_loss * static_cast<double>(batch);

            clip_global_norm(grads, cfg.grad_clip);
            opt.step(model.params, grads);
            pos += batch;
            ++batch_index;
        }

        // Validation on frozen noise, forward only.
        std::vector<double> val_losses(n_val, 0.0);
        parallel_for(n_val, workers, [&](std::size_t i) {
            val_losses[i] = cfm_element_loss(model, val_z[i], val_x1[i], val_noise[i].t,
                                             val_noise[i].x0);
        });
        double val_loss = std::accumulate(val_losses.begin(), val_losses.end(), 0.0) /
                          static_cast<double>(n_val);
        if (!std::isfinite(val_loss))
            throw TrainError("train: non-finite validation loss at epoch " + std::to_string(epoch));

        double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        EpochStats stats{epoch, epoch_loss_sum / static_cast<double>(n_train), val_loss, cfg.lr,
                         seconds};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);

        bool stop = stopper.observe(epoch, val_loss);
        if (stopper.best_epoch() == epoch) result.best_params = model.params;
        if (stop) break;
    }

    result.best_epoch = stopper.best_epoch();
    result.best_val = stopper.best_val();
    return result;
}

template TrainResult<float> train<float>(PenguinModel<float>&, const std::vector<WindowPair>&,
                                         const std::vector<WindowPair>&, const TrainConfig&,
                                         const std::function<void(const EpochStats&)>&);
template TrainResult<double> train<double>(PenguinModel<double>&, const std::vector<WindowPair>&,
                                           const std::vector<WindowPair>&, const TrainConfig&,
                                           const std::function<void(const EpochStats&)>&);

// ---- finite-difference gradient check -------------------------------------

std::string param_family(const std::string& name) {
    auto contains = [&](const char* s) { return name.find(s) != std::string::npos; };
    if (contains("_embed")) return "conv";
    if (contains("film_")) return "film_gen";
    if (contains(".scale.")) return "scale_gen";
    if (contains(".s5.lambda")) return "lambda";
    if (contains(".s5.log_delta")) return "delta";
    if (contains(".s5.b_")) return "B";
    if (contains(".s5.c_")) return "C";
    if (contains(".s5.d_skip")) return "D";
    if (contains("ffn")) return "ffn";
    if (contains("head")) return "head";
    if (contains(".cond.")) return "cond_proj";
    if (contains("temb")) return "temb_mlp";
    if (contains("norm")) return "norm";
    return "other";
}

GradCheckReport gradcheck_tiny_model(std::uint64_t seed, bool sabotage) {
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.embed_dim = 8;
    cfg.state_dim = 8;
    cfg.window = 32;
    cfg.ffn_expansion = 2;
    cfg.temb_dim = 8;

    PenguinModel<double> model = build_model<double>(cfg, mix_seed(seed, 0x6C0DECULL));

    // Perturb every tensor so zero-initialized families (FiLM/scale heads)
    // also receive informative gradients.
    {
        Rng rng(mix_seed(seed, 0x9E12ULL));
        for (int i = 0; i < static_cast<int>(model.params.count()); ++i)
            for (auto& v : model.params.value(i).data) v += 0.05 * rng.normal();
    }

    // Frozen two-element batch with fixed (t, x0).
    const std::size_t k = static_cast<std::size_t>(cfg.window);
    struct Elem {
        std::vector<double> z, x1, x0;
        double t;
    };
    std::vector<Elem> batch(2);
    {
        Rng rng(mix_seed(seed, 0xDA7AULL));
        for (auto& e : batch) {
            e.z.resize(k);
            e.x1.resize(k);
            e.x0.resize(k);
            for (auto& v : e.z) v = rng.normal();
            for (auto& v : e.x1) v = rng.normal();
            for (auto& v : e.x0) v = rng.normal();
            e.t = rng.uniform();
        }
    }

    auto loss_value = [&]() {
        double total = 0.0;
        for (const auto& e : batch) total += cfm_element_loss(model, e.z, e.x1, e.t, e.x0);
        return total / static_cast<double>(batch.size());
    };

    GradMap<double> grads = make_grad_map(model.params);
    for (const auto& e : batch)
        cfm_element_gradient(model, e.z, e.x1, e.t, e.x0, grads,
                             1.0 / static_cast<double>(batch.size()));

    if (sabotage) {
        for (int i = 0; i < static_cast<int>(model.params.count()); ++i)
            if (param_family(model.params.name(i)) == "conv")
                for (auto& v : grads[static_cast<std::size_t>(i)].data) v = -v;
    }

    GradCheckReport report;
    report.pass = true;
    Rng probe_rng(mix_seed(seed, 0x9B0BEULL));

    for (int i = 0; i < static_cast<int>(model.params.count()); ++i) {
        Tensor<double>& p = model.params.value(static_cast<int>(i));
        const std::string& name = model.params.name(i);
        std::size_t n_probe = std::min<std::size_t>(2, p.size());
        for (std::size_t pr = 0; pr < n_probe; ++pr) {
            std::size_t idx = p.size() <= 2 ? pr : probe_rng.uniform_index(p.size());
            double theta = p[idx];
            double h = 1e-4 * std::max(1.0, std::abs(theta));
            p[idx] = theta + h;
            double lp = loss_value();
            p[idx] = theta - h;
            double lm = loss_value();
            p[idx] = theta;
            double numeric = (lp - lm) / (2.0 * h);
            double analytic =
                grads[static_cast<std::size_t>(i)].data.empty() ? 0.0 : grads[static_cast<std::size_t>(i)][idx];

            GradCheckProbe probe;
            probe.param = name;
            probe.index = idx;
            probe.analytic = analytic;
            probe.numeric = numeric;
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            probe.rel_err = std::abs(analytic - numeric) / denom;
            if (std::abs(analytic - numeric) < 1e-10) probe.rel_err = 0.0;

            std::string family = param_family(name);
            auto it = report.family_max.find(family);
            if (it == report.family_max.end() || probe.rel_err > it->second)
                report.family_max[family] = probe.rel_err;
            if (report.probes.empty() || probe.rel_err > report.worst.rel_err)
                report.worst = probe;
            report.probes.push_back(std::move(probe));
        }
    }
    for (const auto& probe : report.probes)
        if (probe.rel_err > 1e-3) report.pass = false;
    return report;
}

} // namespace penguin
