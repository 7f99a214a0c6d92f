#include "penguin/autodiff.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "penguin/common.hpp"
#include "penguin/ssm.hpp"

namespace penguin {

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
ConstMatMap<T> cmap2(const Tensor<T>& t, std::size_t r, std::size_t c) {
    return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
MatMap<T> mmap2(Tensor<T>& t, std::size_t r, std::size_t c) {
    return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

} // namespace

template <typename T>
typename Tape<T>::NodeId Tape<T>::push(Tensor<T> value, bool requires_grad,
                                       std::function<void()> back) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(NodeId id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.data.empty()) {
        node.grad = Tensor<T>(node.value.shape);
    }
    return node.grad;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(NodeId id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.data.empty()) {
        empty_grad_ = Tensor<T>(node.value.shape);
        return empty_grad_;
    }
    return node.grad;
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::constant(Tensor<T> value) {
    return push(std::move(value), false, nullptr);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::leaf(Tensor<T> value) {
    return push(std::move(value), grad_enabled_, nullptr);
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::conv1d(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1 || wv.rows() != bv.size() ||
        wv.cols() % 2 == 0)
        throw ShapeError("conv1d: bad shapes");
    std::size_t k_len = xv.size();
    std::size_t n = wv.rows();
    std::size_t kw = wv.cols();
    std::size_t c = kw / 2;

    Tensor<T> y({k_len, n});
    for (std::size_t k = 0; k < k_len; ++k) {
        T* yk = y.ptr() + k * n;
        for (std::size_t j = 0; j < kw; ++j) {
            std::ptrdiff_t t = static_cast<std::ptrdiff_t>(k + j) - static_cast<std::ptrdiff_t>(c);
            if (t < 0 || t >= static_cast<std::ptrdiff_t>(k_len)) continue;
            T xt = xv[static_cast<std::size_t>(t)];
            const T* wcol = wv.ptr() + j;
            for (std::size_t o = 0; o < n; ++o) yk[o] += wcol[o * kw] * xt;
        }
        for (std::size_t o = 0; o < n; ++o) yk[o] += bv[o];
    }

    bool rg = grad_enabled_ && (wants_grad(x) || wants_grad(w) || wants_grad(b));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, w, b, k_len, n, kw, c]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& xv2 = value(x);
            const Tensor<T>& wv2 = value(w);
            bool gx_needed = wants_grad(x);
            bool gw_needed = wants_grad(w);
            bool gb_needed = wants_grad(b);
            Tensor<T>* gx = gx_needed ? &grad_buffer(x) : nullptr;
            Tensor<T>* gw = gw_needed ? &grad_buffer(w) : nullptr;
            Tensor<T>* gb = gb_needed ? &grad_buffer(b) : nullptr;
            for (std::size_t k = 0; k < k_len; ++k) {
                const T* gk = gy.ptr() + k * n;
                if (gb) {
                    for (std::size_t o = 0; o < n; ++o) (*gb)[o] += gk[o];
                }
                for (std::size_t j = 0; j < kw; ++j) {
                    std::ptrdiff_t t =
                        static_cast<std::ptrdiff_t>(k + j) - static_cast<std::ptrdiff_t>(c);
                    if (t < 0 || t >= static_cast<std::ptrdiff_t>(k_len)) continue;
                    if (gw) {
                        T xt = xv2[static_cast<std::size_t>(t)];
                        for (std::size_t o = 0; o < n; ++o) gw->at(o, j) += gk[o] * xt;
                    }
                    if (gx) {
                        T acc = T(0);
                        const T* wcol = wv2.ptr() + j;
                        for (std::size_t o = 0; o < n; ++o) acc += gk[o] * wcol[o * kw];
                        (*gx)[static_cast<std::size_t>(t)] += acc;
                    }
                }
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::linear(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.cols() || bv.size() != wv.rows())
        throw ShapeError("linear: bad shapes " + shape_string(xv) + " x " + shape_string(wv));
    std::size_t k_len = xv.rows(), in = xv.cols(), out = wv.rows();

    Tensor<T> y({k_len, out});
    mmap2(y, k_len, out).noalias() = cmap2(xv, k_len, in) * cmap2(wv, out, in).transpose();
    for (std::size_t k = 0; k < k_len; ++k) {
        T* yk = y.ptr() + k * out;
        for (std::size_t o = 0; o < out; ++o) yk[o] += bv[o];
    }

    bool rg = grad_enabled_ && (wants_grad(x) || wants_grad(w) || wants_grad(b));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, w, b, k_len, in, out]() {
            const Tensor<T>& gy = nodes_[self].grad;
            if (wants_grad(x)) {
                Tensor<T>& gx = grad_buffer(x);
                mmap2(gx, k_len, in).noalias() +=
                    cmap2(gy, k_len, out) * cmap2(value(w), out, in);
            }
            if (wants_grad(w)) {
                Tensor<T>& gw = grad_buffer(w);
                mmap2(gw, out, in).noalias() +=
                    cmap2(gy, k_len, out).transpose() * cmap2(value(x), k_len, in);
            }
            if (wants_grad(b)) {
                Tensor<T>& gb = grad_buffer(b);
                for (std::size_t k = 0; k < k_len; ++k) {
                    const T* gk = gy.ptr() + k * out;
                    for (std::size_t o = 0; o < out; ++o) gb[o] += gk[o];
                }
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

namespace {
template <typename T>
constexpr T layernorm_eps() {
    return T(1e-5);
}
} // namespace

template <typename T>
typename Tape<T>::NodeId Tape<T>::layernorm(NodeId x) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 2) throw ShapeError("layernorm: expected rank-2 input");
    std::size_t k_len = xv.rows(), n = xv.cols();

    Tensor<T> xhat({k_len, n});
    std::vector<T> inv_std(k_len);
    for (std::size_t k = 0; k < k_len; ++k) {
        const T* xk = xv.ptr() + k * n;
        T mean = T(0);
        for (std::size_t p = 0; p < n; ++p) mean += xk[p];
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t p = 0; p < n; ++p) var += (xk[p] - mean) * (xk[p] - mean);
        var /= static_cast<T>(n);
        T inv = T(1) / std::sqrt(var + layernorm_eps<T>());
        inv_std[k] = inv;
        T* hk = xhat.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) hk[p] = (xk[p] - mean) * inv;
    }

    bool rg = grad_enabled_ && wants_grad(x);
    std::function<void()> back;
    Tensor<T> y = xhat; // plain layernorm output is the normalized tensor
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, xhat = std::move(xhat), inv_std = std::move(inv_std), k_len, n]() {
            const Tensor<T>& gy = nodes_[self].grad;
            Tensor<T>& gx = grad_buffer(x);
            for (std::size_t k = 0; k < k_len; ++k) {
                const T* gk = gy.ptr() + k * n;
                const T* hk = xhat.ptr() + k * n;
                T* ok = gx.ptr() + k * n;
                T sum_g = T(0), sum_gh = T(0);
                for (std::size_t p = 0; p < n; ++p) {
                    sum_g += gk[p];
                    sum_gh += gk[p] * hk[p];
                }
                T inv = inv_std[k] / static_cast<T>(n);
                for (std::size_t p = 0; p < n; ++p)
                    ok[p] += inv * (static_cast<T>(n) * gk[p] - sum_g - hk[p] * sum_gh);
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::layernorm_affine(NodeId x, NodeId gamma, NodeId beta) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    if (xv.rank() != 2 || gv.size() != xv.cols() || bv.size() != xv.cols())
        throw ShapeError("layernorm_affine: bad shapes");
    std::size_t k_len = xv.rows(), n = xv.cols();

    Tensor<T> xhat({k_len, n});
    std::vector<T> inv_std(k_len);
    Tensor<T> y({k_len, n});
    for (std::size_t k = 0; k < k_len; ++k) {
        const T* xk = xv.ptr() + k * n;
        T mean = T(0);
        for (std::size_t p = 0; p < n; ++p) mean += xk[p];
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t p = 0; p < n; ++p) var += (xk[p] - mean) * (xk[p] - mean);
        var /= static_cast<T>(n);
        T inv = T(1) / std::sqrt(var + layernorm_eps<T>());
        inv_std[k] = inv;
        T* hk = xhat.ptr() + k * n;
        T* yk = y.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) {
            hk[p] = (xk[p] - mean) * inv;
            yk[p] = gv[p] * hk[p] + bv[p];
        }
    }

    bool rg = grad_enabled_ && (wants_grad(x) || wants_grad(gamma) || wants_grad(beta));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
                k_len, n]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& gv2 = value(gamma);
            Tensor<T>* gg = wants_grad(gamma) ? &grad_buffer(gamma) : nullptr;
            Tensor<T>* gb = wants_grad(beta) ? &grad_buffer(beta) : nullptr;
            Tensor<T>* gx = wants_grad(x) ? &grad_buffer(x) : nullptr;
            for (std::size_t k = 0; k < k_len; ++k) {
                const T* gk = gy.ptr() + k * n;
                const T* hk = xhat.ptr() + k * n;
                T sum_g = T(0), sum_gh = T(0);
                for (std::size_t p = 0; p < n; ++p) {
                    T ghat = gk[p] * gv2[p];
                    sum_g += ghat;
                    sum_gh += ghat * hk[p];
                    if (gg) (*gg)[p] += gk[p] * hk[p];
                    if (gb) (*gb)[p] += gk[p];
                }
                if (gx) {
                    T* ok = gx->ptr() + k * n;
                    T inv = inv_std[k] / static_cast<T>(n);
                    for (std::size_t p = 0; p < n; ++p) {
                        T ghat = gk[p] * gv2[p];
                        ok[p] += inv * (static_cast<T>(n) * ghat - sum_g - hk[p] * sum_gh);
                    }
                }
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::film(NodeId x, NodeId gamma, NodeId beta) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    if (xv.rank() != 2 || gv.size() != xv.cols() || bv.size() != xv.cols())
        throw ShapeError("film: bad shapes");
    std::size_t k_len = xv.rows(), n = xv.cols();

    Tensor<T> y({k_len, n});
    for (std::size_t k = 0; k < k_len; ++k) {
        const T* xk = xv.ptr() + k * n;
        T* yk = y.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) yk[p] = gv[p] * xk[p] + bv[p];
    }

    bool rg = grad_enabled_ && (wants_grad(x) || wants_grad(gamma) || wants_grad(beta));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, gamma, beta, k_len, n]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& xv2 = value(x);
            const Tensor<T>& gv2 = value(gamma);
            Tensor<T>* gx = wants_grad(x) ? &grad_buffer(x) : nullptr;
            Tensor<T>* gg = wants_grad(gamma) ? &grad_buffer(gamma) : nullptr;
            Tensor<T>* gb = wants_grad(beta) ? &grad_buffer(beta) : nullptr;
            for (std::size_t k = 0; k < k_len; ++k) {
                const T* gk = gy.ptr() + k * n;
                const T* xk = xv2.ptr() + k * n;
                for (std::size_t p = 0; p < n; ++p) {
                    if (gx) (gx->ptr() + k * n)[p] += gk[p] * gv2[p];
                    if (gg) (*gg)[p] += gk[p] * xk[p];
                    if (gb) (*gb)[p] += gk[p];
                }
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::scale_channels(NodeId x, NodeId alpha) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& av = value(alpha);
    if (xv.rank() != 2 || av.size() != xv.cols()) throw ShapeError("scale_channels: bad shapes");
    std::size_t k_len = xv.rows(), n = xv.cols();

    Tensor<T> y({k_len, n});
    for (std::size_t k = 0; k < k_len; ++k) {
        const T* xk = xv.ptr() + k * n;
        T* yk = y.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) yk[p] = av[p] * xk[p];
    }

    bool rg = grad_enabled_ && (wants_grad(x) || wants_grad(alpha));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, alpha, k_len, n]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& xv2 = value(x);
            const Tensor<T>& av2 = value(alpha);
            Tensor<T>* gx = wants_grad(x) ? &grad_buffer(x) : nullptr;
            Tensor<T>* ga = wants_grad(alpha) ? &grad_buffer(alpha) : nullptr;
            for (std::size_t k = 0; k < k_len; ++k) {
                const T* gk = gy.ptr() + k * n;
                const T* xk = xv2.ptr() + k * n;
                for (std::size_t p = 0; p < n; ++p) {
                    if (gx) (gx->ptr() + k * n)[p] += gk[p] * av2[p];
                    if (ga) (*ga)[p] += gk[p] * xk[p];
                }
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::gelu(NodeId x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape);
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    for (std::size_t i = 0; i < xv.size(); ++i) {
        T v = xv[i];
        y[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    }

    bool rg = grad_enabled_ && wants_grad(x);
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, inv_sqrt2]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& xv2 = value(x);
            Tensor<T>& gx = grad_buffer(x);
            const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
            for (std::size_t i = 0; i < xv2.size(); ++i) {
                T v = xv2[i];
                T phi_cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                T phi_pdf = std::exp(T(-0.5) * v * v) * inv_sqrt2pi;
                gx[i] += gy[i] * (phi_cdf + v * phi_pdf);
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add(NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
    Tensor<T> y(av.shape);
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];

    bool rg = grad_enabled_ && (wants_grad(a) || wants_grad(b));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, a, b]() {
            const Tensor<T>& gy = nodes_[self].grad;
            if (wants_grad(a)) {
                Tensor<T>& ga = grad_buffer(a);
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (wants_grad(b)) {
                Tensor<T>& gb = grad_buffer(b);
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::add_const(NodeId x, T c) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] + c;
    bool rg = grad_enabled_ && wants_grad(x);
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x]() {
            const Tensor<T>& gy = nodes_[self].grad;
            Tensor<T>& gx = grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::mul_const(NodeId x, T c) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * c;
    bool rg = grad_enabled_ && wants_grad(x);
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, c]() {
            const Tensor<T>& gy = nodes_[self].grad;
            Tensor<T>& gx = grad_buffer(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * c;
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::s5(NodeId x, const S5Nodes& p) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 2) throw ShapeError("s5: expected {K, n} input");
    std::size_t n = xv.cols();
    std::size_t m2 = value(p.lambda_log_neg_re).size();

    S5Layer<T> layer;
    layer.lambda_re.resize(m2);
    layer.lambda_im.assign(value(p.lambda_im).data.begin(), value(p.lambda_im).data.end());
    layer.log_delta.assign(value(p.log_delta).data.begin(), value(p.log_delta).data.end());
    const Tensor<T>& llnr = value(p.lambda_log_neg_re);
    for (std::size_t j = 0; j < m2; ++j) layer.lambda_re[j] = -std::exp(llnr[j]);
    layer.b_re = value(p.b_re);
    layer.b_im = value(p.b_im);
    layer.c_re = value(p.c_re);
    layer.c_im = value(p.c_im);
    layer.d_skip.assign(value(p.d_skip).data.begin(), value(p.d_skip).data.end());
    if (layer.feature_dim() != n) throw ShapeError("s5: feature dim mismatch");

    auto saved = std::make_shared<S5Saved<T>>();
    Tensor<T> y = s5_forward_saved(layer, xv, *saved);

    bool rg = grad_enabled_ &&
              (wants_grad(x) || wants_grad(p.lambda_log_neg_re) || wants_grad(p.lambda_im) ||
               wants_grad(p.log_delta) || wants_grad(p.b_re) || wants_grad(p.b_im) ||
               wants_grad(p.c_re) || wants_grad(p.c_im) || wants_grad(p.d_skip));
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x, p, layer = std::move(layer), saved]() {
            const Tensor<T>& gy = nodes_[self].grad;
            const Tensor<T>& xv2 = value(x);
            S5Grads<T> grads = make_s5_grads(layer);
            Tensor<T> gx_local(xv2.shape);
            s5_backward(layer, *saved, xv2, gy, grads, gx_local);

            if (wants_grad(x)) {
                Tensor<T>& gx = grad_buffer(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gx_local[i];
            }
            if (wants_grad(p.lambda_log_neg_re)) {
                Tensor<T>& g = grad_buffer(p.lambda_log_neg_re);
                // d lambda_re / d theta = -exp(theta) = lambda_re
                for (std::size_t j = 0; j < g.size(); ++j)
                    g[j] += grads.lambda_re[j] * layer.lambda_re[j];
            }
            if (wants_grad(p.lambda_im)) {
                Tensor<T>& g = grad_buffer(p.lambda_im);
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += grads.lambda_im[j];
            }
            if (wants_grad(p.log_delta)) {
                Tensor<T>& g = grad_buffer(p.log_delta);
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += grads.log_delta[j];
            }
            auto accumulate = [](Tensor<T>& dst, const Tensor<T>& src) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            };
            if (wants_grad(p.b_re)) accumulate(grad_buffer(p.b_re), grads.b_re);
            if (wants_grad(p.b_im)) accumulate(grad_buffer(p.b_im), grads.b_im);
            if (wants_grad(p.c_re)) accumulate(grad_buffer(p.c_re), grads.c_re);
            if (wants_grad(p.c_im)) accumulate(grad_buffer(p.c_im), grads.c_im);
            if (wants_grad(p.d_skip)) {
                Tensor<T>& g = grad_buffer(p.d_skip);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += grads.d_skip[i];
            }
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::mse(NodeId pred, Tensor<T> target) {
    const Tensor<T>& pv = value(pred);
    if (pv.size() != target.size()) throw ShapeError("mse: size mismatch");
    std::size_t n = pv.size();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        T d = pv[i] - target[i];
        acc += d * d;
    }
    Tensor<T> y({1});
    y[0] = acc / static_cast<T>(n);

    bool rg = grad_enabled_ && wants_grad(pred);
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, pred, target = std::move(target), n]() {
            T gl = nodes_[self].grad[0];
            const Tensor<T>& pv2 = value(pred);
            Tensor<T>& gp = grad_buffer(pred);
            T scale = T(2) / static_cast<T>(n) * gl;
            for (std::size_t i = 0; i < n; ++i) gp[i] += scale * (pv2[i] - target[i]);
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
typename Tape<T>::NodeId Tape<T>::sum_squares(NodeId x) {
    const Tensor<T>& xv = value(x);
    T acc = T(0);
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * xv[i];
    Tensor<T> y({1});
    y[0] = acc;

    bool rg = grad_enabled_ && wants_grad(x);
    std::function<void()> back;
    if (rg) {
        NodeId self = static_cast<NodeId>(nodes_.size());
        back = [this, self, x]() {
            T gl = nodes_[self].grad[0];
            const Tensor<T>& xv2 = value(x);
            Tensor<T>& gx = grad_buffer(x);
            for (std::size_t i = 0; i < xv2.size(); ++i) gx[i] += T(2) * xv2[i] * gl;
        };
    }
    return push(std::move(y), rg, std::move(back));
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
    if (!grad_enabled_) throw TrainError("backward on a gradient-disabled tape");
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
    grad_buffer(loss)[0] = T(1);
    for (std::size_t i = static_cast<std::size_t>(loss) + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.back && !node.grad.data.empty()) node.back();
    }
}

template class Tape<float>;
template class Tape<double>;

} // namespace penguin
