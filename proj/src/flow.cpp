#include "penguin/flow.hpp"

#include <cmath>

namespace penguin {

template <typename T>
FlowSample<T> make_flow_sample_at(const std::vector<T>& x1, double t, Rng& rng) {
    FlowSample<T> s;
    s.t = t;
    s.x1 = x1;
    s.x0.resize(x1.size());
    for (auto& v : s.x0) v = static_cast<T>(rng.normal());
    s.xt.resize(x1.size());
    s.u_target.resize(x1.size());
    T tt = static_cast<T>(t);
    T omt = static_cast<T>(1.0 - t);
    for (std::size_t i = 0; i < x1.size(); ++i) {
        s.xt[i] = omt * s.x0[i] + tt * s.x1[i];
        s.u_target[i] = s.x1[i] - s.x0[i];
    }
    return s;
}

template <typename T>
FlowSample<T> make_flow_sample(const std::vector<T>& x1, Rng& rng) {
    double t = rng.uniform();
    return make_flow_sample_at(x1, t, rng);
}

template <typename T>
double cfm_loss(const VelocityFn<T>& u,
                const std::vector<std::pair<std::vector<T>, std::vector<T>>>& batch, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("cfm_loss: empty batch");
    double total = 0.0;
    for (const auto& [x1, z] : batch) {
        FlowSample<T> s = make_flow_sample(x1, rng);
        std::vector<T> pred = u(s.xt, z, s.t);
        if (pred.size() != x1.size()) throw ShapeError("cfm_loss: velocity output length mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            double d = static_cast<double>(pred[i]) - static_cast<double>(s.u_target[i]);
            acc += d * d;
        }
        if (!std::isfinite(acc))
            throw TrainError("cfm_loss: non-finite model output");
        total += acc / static_cast<double>(x1.size());
    }
    return total / static_cast<double>(batch.size());
}

template <typename T>
std::vector<T> heun_sample(const VelocityFn<T>& u, const std::vector<T>& z,
                           const SamplerConfig& cfg, Rng& rng) {
    if (cfg.steps < 1) throw std::invalid_argument("heun_sample: steps must be >= 1");
    std::vector<T> x(z.size());
    for (auto& v : x) v = static_cast<T>(rng.normal());

    const double dt = 1.0 / static_cast<double>(cfg.steps);
    std::vector<T> x_pred(x.size());
    for (int i = 0; i < cfg.steps; ++i) {
        double t0 = static_cast<double>(i) * dt;
        double t1 = static_cast<double>(i + 1) * dt;
        std::vector<T> f1 = u(x, z, t0);
        for (std::size_t j = 0; j < x.size(); ++j)
            x_pred[j] = x[j] + static_cast<T>(dt) * f1[j];
        std::vector<T> f2 = u(x_pred, z, t1);
        T half_dt = static_cast<T>(dt / 2.0);
        bool finite = true;
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] += half_dt * (f1[j] + f2[j]);
            finite = finite && std::isfinite(static_cast<double>(x[j]));
        }
        if (!finite)
            throw TrainError("heun_sample: non-finite state at step " + std::to_string(i));
    }
    if (!cfg.target_affine.is_identity())
        for (auto& v : x)
            v = static_cast<T>(cfg.target_affine.from_model(static_cast<double>(v)));
    return x;
}

template <typename T>
std::vector<std::vector<T>> reconstruct_windows(const VelocityFn<T>& u,
                                                const std::vector<std::vector<T>>& ppg_windows,
                                                const SamplerConfig& cfg, int threads) {
    std::vector<std::vector<T>> out(ppg_windows.size());
    parallel_for(ppg_windows.size(), threads, [&](std::size_t i) {
        Rng rng(cfg.seed + i);
        out[i] = heun_sample(u, ppg_windows[i], cfg, rng);
    });
    return out;
}

#define PENGUIN_INSTANTIATE_FLOW(T)                                                             \
    template FlowSample<T> make_flow_sample_at<T>(const std::vector<T>&, double, Rng&);         \
    template FlowSample<T> make_flow_sample<T>(const std::vector<T>&, Rng&);                    \
    template double cfm_loss<T>(const VelocityFn<T>&,                                           \
                                const std::vector<std::pair<std::vector<T>, std::vector<T>>>&,  \
                                Rng&);                                                          \
    template std::vector<T> heun_sample<T>(const VelocityFn<T>&, const std::vector<T>&,         \
                                           const SamplerConfig&, Rng&);                         \
    template std::vector<std::vector<T>> reconstruct_windows<T>(                                \
        const VelocityFn<T>&, const std::vector<std::vector<T>>&, const SamplerConfig&, int);

PENGUIN_INSTANTIATE_FLOW(float)
PENGUIN_INSTANTIATE_FLOW(double)

#undef PENGUIN_INSTANTIATE_FLOW

} // namespace penguin
