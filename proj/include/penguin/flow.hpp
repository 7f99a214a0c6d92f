#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "penguin/common.hpp"

namespace penguin {

// Velocity field u(x_t, z, t); the model wraps into this shape, and tests
// substitute analytic stubs.
template <typename T>
using VelocityFn =
    std::function<std::vector<T>(const std::vector<T>& x_t, const std::vector<T>& z, double t)>;

// Optional affine between data units and model units (used for ABP, which
// trains in mmHg by default). Training maps targets with to_model; the
// sampler maps outputs back with from_model. Identity by default.
struct TargetAffine {
    double scale = 1.0;
    double offset = 0.0;
    bool is_identity() const { return scale == 1.0 && offset == 0.0; }
    double to_model(double v) const { return (v - offset) / scale; }
    double from_model(double v) const { return scale * v + offset; }
};

struct SamplerConfig {
    int steps = 25;
    std::uint64_t seed = 0;
    TargetAffine target_affine;
};

// One training draw on the straight path: xt = (1-t) x0 + t x1,
// u_target = x1 - x0.
template <typename T>
struct FlowSample {
    std::vector<T> x0;
    std::vector<T> x1;
    std::vector<T> xt;
    std::vector<T> u_target;
    double t = 0.0;
};

template <typename T>
FlowSample<T> make_flow_sample_at(const std::vector<T>& x1, double t, Rng& rng);

template <typename T>
FlowSample<T> make_flow_sample(const std::vector<T>& x1, Rng& rng);

// Mean over batch and sequence positions of |u(xt|z) - (x1 - x0)|^2 with
// fresh (t, x0) per element.
template <typename T>
double cfm_loss(const VelocityFn<T>& u, const std::vector<std::pair<std::vector<T>, std::vector<T>>>& batch,
                Rng& rng);

// Heun (predictor-corrector trapezoid) integration of dx = u(x, t | z) from
// x0 ~ N(0,1) over a uniform grid of cfg.steps steps; applies
// cfg.target_affine.from_model afterwards. Throws TrainError naming the
// step index if the state goes non-finite.
template <typename T>
std::vector<T> heun_sample(const VelocityFn<T>& u, const std::vector<T>& z,
                           const SamplerConfig& cfg, Rng& rng);

// One reconstruction per window, order preserved; window i uses an
// independent Rng seeded with cfg.seed + i (content-independent, so
// reordering inputs reorders outputs identically).
template <typename T>
std::vector<std::vector<T>> reconstruct_windows(const VelocityFn<T>& u,
                                                const std::vector<std::vector<T>>& ppg_windows,
                                                const SamplerConfig& cfg, int threads = 1);

} // namespace penguin
