#include "penguin/model.hpp"

#include <cmath>

#include "penguin/common.hpp"
#include "penguin/ssm.hpp"

namespace penguin {

void ModelConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("model: depth must be >= 1");
    if (embed_dim < 2 || state_dim < 2 || temb() < 2)
        throw std::invalid_argument("model: dimensions must be >= 2");
    if (state_dim % 2 != 0) throw std::invalid_argument("model: state_dim must be even");
    if (window < kConvKernel)
        throw std::invalid_argument("model: window must be >= conv kernel size");
    if (ffn_expansion < 1) throw std::invalid_argument("model: ffn_expansion must be >= 1");
    if (temb() % 2 != 0) throw std::invalid_argument("model: timestep embedding dim must be even");
}

template <typename T>
std::vector<T> sinusoidal_encode(double t, std::size_t dim) {
    if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_encode: dim must be even");
    std::vector<T> out(dim);
    double scaled = t * 1000.0;
    for (std::size_t i = 0; 2 * i < dim; ++i) {
        double freq = std::pow(10000.0, -(2.0 * static_cast<double>(i)) / static_cast<double>(dim));
        double arg = scaled * freq;
        out[2 * i] = static_cast<T>(std::sin(arg));
        out[2 * i + 1] = static_cast<T>(std::cos(arg));
    }
    return out;
}

template <typename T>
Tensor<T> film_modulate(const Tensor<T>& h, const std::vector<T>& gamma,
                        const std::vector<T>& beta) {
    if (h.rank() != 2 || gamma.size() != h.cols() || beta.size() != h.cols())
        throw ShapeError("film_modulate: shape mismatch");
    Tensor<T> out(h.shape);
    std::size_t k_len = h.rows(), n = h.cols();
    for (std::size_t k = 0; k < k_len; ++k)
        for (std::size_t p = 0; p < n; ++p) out.at(k, p) = gamma[p] * h.at(k, p) + beta[p];
    return out;
}

namespace {

template <typename T>
void add_normal(ParamStore<T>& store, const std::string& name, std::vector<std::size_t> shape,
                double scale, std::uint64_t seed) {
    Tensor<T> t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.data) v = static_cast<T>(rng.normal() * scale);
    store.add(name, std::move(t));
}

template <typename T>
void add_full(ParamStore<T>& store, const std::string& name, std::vector<std::size_t> shape,
              T fill) {
    Tensor<T> t(std::move(shape));
    t.fill(fill);
    store.add(name, std::move(t));
}

template <typename T>
void add_s5_params(ParamStore<T>& store, const std::string& prefix, std::size_t n, std::size_t m,
                   std::uint64_t seed) {
    S5Layer<T> layer = init_s5<T>(n, m, seed);
    std::size_t m2 = m / 2;
    Tensor<T> llnr({m2});
    for (std::size_t j = 0; j < m2; ++j) llnr[j] = std::log(-layer.lambda_re[j]);
    store.add(prefix + ".lambda_log_neg_re", std::move(llnr));
    store.add(prefix + ".lambda_im", Tensor<T>({m2}, std::move(layer.lambda_im)));
    store.add(prefix + ".log_delta", Tensor<T>({m2}, std::move(layer.log_delta)));
    store.add(prefix + ".b_re", std::move(layer.b_re));
    store.add(prefix + ".b_im", std::move(layer.b_im));
    store.add(prefix + ".c_re", std::move(layer.c_re));
    store.add(prefix + ".c_im", std::move(layer.c_im));
    store.add(prefix + ".d_skip", Tensor<T>({n}, std::move(layer.d_skip)));
}

} // namespace

template <typename T>
PenguinModel<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PenguinModel<T> model;
    model.cfg = cfg;
    ParamStore<T>& ps = model.params;

    const std::size_t n = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t m = static_cast<std::size_t>(cfg.state_dim);
    const std::size_t td = static_cast<std::size_t>(cfg.temb());
    const std::size_t h = n * static_cast<std::size_t>(cfg.ffn_expansion);
    const std::size_t kw = ModelConfig::kConvKernel;

    std::uint64_t tensor_seed = 0;
    auto next_seed = [&]() { return mix_seed(seed, tensor_seed++); };

    add_normal(ps, "x_embed.weight", {n, kw}, 1.0 / std::sqrt(double(kw)), next_seed());
    add_full<T>(ps, "x_embed.bias", {n}, T(0));
    add_normal(ps, "z_embed.weight", {n, kw}, 1.0 / std::sqrt(double(kw)), next_seed());
    add_full<T>(ps, "z_embed.bias", {n}, T(0));

    add_normal(ps, "temb.mlp1.weight", {td, td}, 1.0 / std::sqrt(double(td)), next_seed());
    add_full<T>(ps, "temb.mlp1.bias", {td}, T(0));
    add_normal(ps, "temb.mlp2.weight", {td, td}, 1.0 / std::sqrt(double(td)), next_seed());
    add_full<T>(ps, "temb.mlp2.bias", {td}, T(0));

    for (int i = 0; i < cfg.depth; ++i) {
        std::string bx = "blocks." + std::to_string(i) + ".x.";
        std::string bz = "blocks." + std::to_string(i) + ".z.";

        // Modulation heads start at zero: gamma = 1, beta = 0, alpha = 1,
        // so an untrained block is modulation-neutral and matches the
        // ablation's degenerate forms exactly.
        add_full<T>(ps, bx + "film_gamma.weight", {n, td}, T(0));
        add_full<T>(ps, bx + "film_gamma.bias", {n}, T(0));
        add_full<T>(ps, bx + "film_beta.weight", {n, td}, T(0));
        add_full<T>(ps, bx + "film_beta.bias", {n}, T(0));
        add_full<T>(ps, bx + "scale.weight", {n, td}, T(0));
        add_full<T>(ps, bx + "scale.bias", {n}, T(0));

        add_normal(ps, bx + "cond.weight", {n, n}, 1.0 / std::sqrt(double(n)), next_seed());
        add_full<T>(ps, bx + "cond.bias", {n}, T(0));

        add_s5_params(ps, bx + "s5", n, m, next_seed());
        add_normal(ps, bx + "ffn1.weight", {h, n}, 1.0 / std::sqrt(double(n)), next_seed());
        add_full<T>(ps, bx + "ffn1.bias", {h}, T(0));
        add_normal(ps, bx + "ffn2.weight", {n, h}, 1.0 / std::sqrt(double(h)), next_seed());
        add_full<T>(ps, bx + "ffn2.bias", {n}, T(0));

        add_full<T>(ps, bz + "norm1.gamma", {n}, T(1));
        add_full<T>(ps, bz + "norm1.beta", {n}, T(0));
        add_s5_params(ps, bz + "s5", n, m, next_seed());
        add_full<T>(ps, bz + "norm2.gamma", {n}, T(1));
        add_full<T>(ps, bz + "norm2.beta", {n}, T(0));
        add_normal(ps, bz + "ffn1.weight", {h, n}, 1.0 / std::sqrt(double(n)), next_seed());
        add_full<T>(ps, bz + "ffn1.bias", {h}, T(0));
        add_normal(ps, bz + "ffn2.weight", {n, h}, 1.0 / std::sqrt(double(h)), next_seed());
        add_full<T>(ps, bz + "ffn2.bias", {n}, T(0));
    }

    add_normal(ps, "head.weight", {1, n}, 1.0 / std::sqrt(double(n)), next_seed());
    add_full<T>(ps, "head.bias", {1}, T(0));
    return model;
}

namespace {

template <typename T>
typename Tape<T>::S5Nodes bind_s5(ParamBinder<T>& binder, const std::string& prefix) {
    typename Tape<T>::S5Nodes p;
    p.lambda_log_neg_re = binder.node(prefix + ".lambda_log_neg_re");
    p.lambda_im = binder.node(prefix + ".lambda_im");
    p.log_delta = binder.node(prefix + ".log_delta");
    p.b_re = binder.node(prefix + ".b_re");
    p.b_im = binder.node(prefix + ".b_im");
    p.c_re = binder.node(prefix + ".c_re");
    p.c_im = binder.node(prefix + ".c_im");
    p.d_skip = binder.node(prefix + ".d_skip");
    return p;
}

// Shared block body for both streams; returns (hx', hz').
template <typename T>
std::pair<typename Tape<T>::NodeId, typename Tape<T>::NodeId> block_tape(
    Tape<T>& tape, ParamBinder<T>& binder, const ModelConfig& cfg, int block_index,
    typename Tape<T>::NodeId hx, typename Tape<T>::NodeId hz, typename Tape<T>::NodeId temb) {
    using NodeId = typename Tape<T>::NodeId;
    std::string bx = "blocks." + std::to_string(block_index) + ".x.";
    std::string bz = "blocks." + std::to_string(block_index) + ".z.";

    // x-stream
    NodeId a = tape.layernorm(hx);
    if (cfg.use_film) {
        NodeId gamma = tape.add_const(
            tape.linear(temb, binder.node(bx + "film_gamma.weight"),
                        binder.node(bx + "film_gamma.bias")),
            T(1));
        NodeId beta = tape.linear(temb, binder.node(bx + "film_beta.weight"),
                                  binder.node(bx + "film_beta.bias"));
        a = tape.film(a, gamma, beta);
    }
    NodeId nz = tape.layernorm_affine(hz, binder.node(bz + "norm1.gamma"),
                                      binder.node(bz + "norm1.beta"));
    if (cfg.use_ppg_cond) {
        NodeId cond =
            tape.linear(nz, binder.node(bx + "cond.weight"), binder.node(bx + "cond.bias"));
        a = tape.add(a, cond);
    }
    NodeId s = tape.s5(a, bind_s5(binder, bx + "s5"));
    if (cfg.use_scale) {
        NodeId alpha = tape.add_const(
            tape.linear(temb, binder.node(bx + "scale.weight"), binder.node(bx + "scale.bias")),
            T(1));
        s = tape.scale_channels(s, alpha);
    }
    NodeId hx1 = tape.add(hx, s);
    NodeId fx = tape.linear(
        tape.gelu(tape.linear(tape.layernorm(hx1), binder.node(bx + "ffn1.weight"),
                              binder.node(bx + "ffn1.bias"))),
        binder.node(bx + "ffn2.weight"), binder.node(bx + "ffn2.bias"));
    NodeId hx2 = tape.add(hx1, fx);

    // z-stream
    NodeId sz = tape.s5(nz, bind_s5(binder, bz + "s5"));
    NodeId hz1 = tape.add(hz, sz);
    NodeId fz = tape.linear(
        tape.gelu(tape.linear(
            tape.layernorm_affine(hz1, binder.node(bz + "norm2.gamma"),
                                  binder.node(bz + "norm2.beta")),
            binder.node(bz + "ffn1.weight"), binder.node(bz + "ffn1.bias"))),
        binder.node(bz + "ffn2.weight"), binder.node(bz + "ffn2.bias"));
    NodeId hz2 = tape.add(hz1, fz);

    return {hx2, hz2};
}

template <typename T>
typename Tape<T>::NodeId temb_tape(Tape<T>& tape, ParamBinder<T>& binder, const ModelConfig& cfg,
                                   double t) {
    std::size_t td = static_cast<std::size_t>(cfg.temb());
    std::vector<T> enc = sinusoidal_encode<T>(t, td);
    auto enc_node = tape.constant(Tensor<T>({1, td}, std::move(enc)));
    auto h = tape.gelu(
        tape.linear(enc_node, binder.node("temb.mlp1.weight"), binder.node("temb.mlp1.bias")));
    return tape.linear(h, binder.node("temb.mlp2.weight"), binder.node("temb.mlp2.bias"));
}

} // namespace

template <typename T>
typename Tape<T>::NodeId model_forward_tape(Tape<T>& tape, ParamBinder<T>& binder,
                                            const PenguinModel<T>& model, const std::vector<T>& x_t,
                                            const std::vector<T>& z, double t) {
    const ModelConfig& cfg = model.cfg;
    if (x_t.size() != z.size()) throw ShapeError("model_forward: x_t and z length mismatch");
    if (static_cast<int>(x_t.size()) < ModelConfig::kConvKernel)
        throw ShapeError("model_forward: window shorter than conv kernel");
    std::size_t k_len = x_t.size();

    auto x_node = tape.constant(Tensor<T>({k_len}, x_t));
    auto z_node = tape.constant(Tensor<T>({k_len}, z));
    auto hx = tape.conv1d(x_node, binder.node("x_embed.weight"), binder.node("x_embed.bias"));
    auto hz = tape.conv1d(z_node, binder.node("z_embed.weight"), binder.node("z_embed.bias"));
    auto temb = temb_tape(tape, binder, cfg, t);

    for (int i = 0; i < cfg.depth; ++i) {
        auto [hx2, hz2] = block_tape(tape, binder, cfg, i, hx, hz, temb);
        hx = hx2;
        hz = hz2;
    }
    return tape.linear(tape.layernorm(hx), binder.node("head.weight"), binder.node("head.bias"));
}

template <typename T>
std::vector<T> model_forward(const PenguinModel<T>& model, const std::vector<T>& x_t,
                             const std::vector<T>& z, double t) {
    Tape<T> tape(false);
    ParamBinder<T> binder(tape, model.params);
    auto out = model_forward_tape(tape, binder, model, x_t, z, t);
    return tape.value(out).data;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> block_forward(const PenguinModel<T>& model, int block_index,
                                              const Tensor<T>& hx, const Tensor<T>& hz,
                                              const std::vector<T>& temb) {
    if (block_index < 0 || block_index >= model.cfg.depth)
        throw std::invalid_argument("block_forward: block index out of range");
    Tape<T> tape(false);
    ParamBinder<T> binder(tape, model.params);
    auto hx_node = tape.constant(hx);
    auto hz_node = tape.constant(hz);
    auto temb_node = tape.constant(Tensor<T>({1, temb.size()}, temb));
    auto [ox, oz] = block_tape(tape, binder, model.cfg, block_index, hx_node, hz_node, temb_node);
    return {tape.value(ox), tape.value(oz)};
}

#define PENGUIN_INSTANTIATE_MODEL(T)                                                              \
    template PenguinModel<T> build_model<T>(const ModelConfig&, std::uint64_t);                   \
    template std::vector<T> sinusoidal_encode<T>(double, std::size_t);                            \
    template Tensor<T> film_modulate<T>(const Tensor<T>&, const std::vector<T>&,                  \
                                        const std::vector<T>&);                                   \
    template typename Tape<T>::NodeId model_forward_tape<T>(Tape<T>&, ParamBinder<T>&,            \
                                                            const PenguinModel<T>&,               \
                                                            const std::vector<T>&,                \
                                                            const std::vector<T>&, double);       \
    template std::vector<T> model_forward<T>(const PenguinModel<T>&, const std::vector<T>&,       \
                                             const std::vector<T>&, double);                      \
    template std::pair<Tensor<T>, Tensor<T>> block_forward<T>(const PenguinModel<T>&, int,        \
                                                              const Tensor<T>&, const Tensor<T>&, \
                                                              const std::vector<T>&);

PENGUIN_INSTANTIATE_MODEL(float)
PENGUIN_INSTANTIATE_MODEL(double)

#undef PENGUIN_INSTANTIATE_MODEL

} // namespace penguin
