#include "penguin/ssm.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "penguin/common.hpp"

namespace penguin {

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
ConstMatMap<T> cmap(const Tensor<T>& t) {
    return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                          static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
MatMap<T> mmap(Tensor<T>& t) {
    return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

} // namespace

template <typename T>
void S5Layer<T>::validate() const {
    std::size_t m2 = state_pairs();
    std::size_t n = feature_dim();
    if (m2 == 0 || n == 0) throw ShapeError("s5 layer: empty dimensions");
    if (lambda_im.size() != m2 || log_delta.size() != m2)
        throw ShapeError("s5 layer: state vector size mismatch");
    if (b_re.shape != std::vector<std::size_t>{m2, n} || !b_re.same_shape(b_im))
        throw ShapeError("s5 layer: B shape mismatch");
    if (c_re.shape != std::vector<std::size_t>{n, m2} || !c_re.same_shape(c_im))
        throw ShapeError("s5 layer: C shape mismatch");
    for (std::size_t j = 0; j < m2; ++j)
        if (!(lambda_re[j] < T(0)))
            throw std::invalid_argument("s5 layer: Re(lambda) must be negative (state " +
                                        std::to_string(j) + ")");
}

template <typename T>
DiscreteS5<T> discretize_zoh(const S5Layer<T>& layer) {
    layer.validate();
    std::size_t m2 = layer.state_pairs();
    std::size_t n = layer.feature_dim();

    DiscreteS5<T> disc;
    disc.a_re.resize(m2);
    disc.a_im.resize(m2);
    disc.b_re = Tensor<T>({m2, n});
    disc.b_im = Tensor<T>({m2, n});

    for (std::size_t j = 0; j < m2; ++j) {
        T delta = std::exp(layer.log_delta[j]);
        T lr = layer.lambda_re[j], li = layer.lambda_im[j];
        // a = exp(delta * lambda)
        T mag = std::exp(delta * lr);
        T are = mag * std::cos(delta * li);
        T aim = mag * std::sin(delta * li);
        disc.a_re[j] = are;
        disc.a_im[j] = aim;
        // s = (a - 1) / lambda
        T denom = lr * lr + li * li;
        T sre = ((are - T(1)) * lr + aim * li) / denom;
        T sim = (aim * lr - (are - T(1)) * li) / denom;
        for (std::size_t p = 0; p < n; ++p) {
            T br = layer.b_re.at(j, p), bi = layer.b_im.at(j, p);
            disc.b_re.at(j, p) = sre * br - sim * bi;
            disc.b_im.at(j, p) = sre * bi + sim * br;
        }
    }
    return disc;
}

template <typename T>
ComplexSeq<T> scan_sequential(const DiscreteS5<T>& disc, const ComplexSeq<T>& u) {
    std::size_t k_len = u.re.rows();
    std::size_t m2 = u.re.cols();
    if (m2 != disc.a_re.size()) throw ShapeError("scan: state dimension mismatch");

    ComplexSeq<T> h{u.re, u.im}; // h_k starts as u_k, then accumulates
    const T* ar = disc.a_re.data();
    const T* ai = disc.a_im.data();
    for (std::size_t k = 1; k < k_len; ++k) {
        T* hr = h.re.ptr() + k * m2;
        T* hi = h.im.ptr() + k * m2;
        const T* pr = h.re.ptr() + (k - 1) * m2;
        const T* pi = h.im.ptr() + (k - 1) * m2;
        for (std::size_t j = 0; j < m2; ++j) {
            T nr = ar[j] * pr[j] - ai[j] * pi[j] + hr[j];
            T ni = ar[j] * pi[j] + ai[j] * pr[j] + hi[j];
            hr[j] = nr;
            hi[j] = ni;
        }
    }
    return h;
}

template <typename T>
void scan_inclusive_pairs(std::vector<ScanElem<T>>& elems) {
    std::size_t n = elems.size();
    if (n <= 1) return;
    std::size_t size = 1;
    while (size < n) size <<= 1;

    std::vector<ScanElem<T>> work(size); // identity-padded
    std::copy(elems.begin(), elems.end(), work.begin());
    std::vector<ScanElem<T>> original = work;

    // Blelloch up-sweep: partial products, composed in sequence order.
    for (std::size_t d = 1; d < size; d <<= 1)
        for (std::size_t i = 2 * d - 1; i < size; i += 2 * d)
            work[i] = scan_compose(work[i - d], work[i]);

    // Down-sweep producing the exclusive scan.
    work[size - 1] = ScanElem<T>{};
    for (std::size_t d = size >> 1; d >= 1; d >>= 1) {
        for (std::size_t i = 2 * d - 1; i < size; i += 2 * d) {
            ScanElem<T> left = work[i - d];
            work[i - d] = work[i];
            work[i] = scan_compose(work[i], left);
        }
    }

    for (std::size_t i = 0; i < n; ++i) elems[i] = scan_compose(work[i], original[i]);
}

template <typename T>
ComplexSeq<T> scan_parallel(const DiscreteS5<T>& disc, const ComplexSeq<T>& u) {
    std::size_t k_len = u.re.rows();
    std::size_t m2 = u.re.cols();
    if (m2 != disc.a_re.size()) throw ShapeError("scan: state dimension mismatch");

    // Compositions run in double even for the float instantiation: the tree
    // reassociates long weighted sums, and accumulating them in working
    // precision costs the 1e-5 agreement budget with the recurrence.
    using W = std::conditional_t<std::is_same_v<T, float>, double, T>;
    ComplexSeq<T> h{Tensor<T>({k_len, m2}), Tensor<T>({k_len, m2})};
    std::vector<ScanElem<W>> elems(k_len);
    for (std::size_t j = 0; j < m2; ++j) {
        std::complex<W> a(disc.a_re[j], disc.a_im[j]);
        for (std::size_t k = 0; k < k_len; ++k)
            elems[k] = ScanElem<W>{a, {static_cast<W>(u.re.at(k, j)),
                                       static_cast<W>(u.im.at(k, j))}};
        scan_inclusive_pairs(elems);
        for (std::size_t k = 0; k < k_len; ++k) {
            h.re.at(k, j) = static_cast<T>(elems[k].b.real());
            h.im.at(k, j) = static_cast<T>(elems[k].b.imag());
        }
    }
    return h;
}

namespace {

template <typename T>
Tensor<T> s5_readout(const S5Layer<T>& layer, const Tensor<T>& x, const ComplexSeq<T>& h) {
    std::size_t k_len = x.rows();
    std::size_t n = x.cols();
    Tensor<T> y({k_len, n});
    // y = 2 (Hre Cre^T - Him Cim^T) + x . d
    mmap(y).noalias() = T(2) * (cmap(h.re) * cmap(layer.c_re).transpose());
    mmap(y).noalias() -= T(2) * (cmap(h.im) * cmap(layer.c_im).transpose());
    for (std::size_t k = 0; k < k_len; ++k) {
        T* yk = y.ptr() + k * n;
        const T* xk = x.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) yk[p] += layer.d_skip[p] * xk[p];
    }
    return y;
}

template <typename T>
ComplexSeq<T> s5_input_projection(const DiscreteS5<T>& disc, const Tensor<T>& x) {
    std::size_t k_len = x.rows();
    std::size_t m2 = disc.a_re.size();
    ComplexSeq<T> u{Tensor<T>({k_len, m2}), Tensor<T>({k_len, m2})};
    mmap(u.re).noalias() = cmap(x) * cmap(disc.b_re).transpose();
    mmap(u.im).noalias() = cmap(x) * cmap(disc.b_im).transpose();
    return u;
}

} // namespace

template <typename T>
Tensor<T> s5_forward(const S5Layer<T>& layer, const Tensor<T>& x) {
    S5Saved<T> saved;
    return s5_forward_saved(layer, x, saved);
}

template <typename T>
Tensor<T> s5_forward_saved(const S5Layer<T>& layer, const Tensor<T>& x, S5Saved<T>& saved) {
    if (x.rank() != 2 || x.cols() != layer.feature_dim())
        throw ShapeError("s5_forward: expected {K, n} input, got " + shape_string(x));
    saved.disc = discretize_zoh(layer);
    ComplexSeq<T> u = s5_input_projection(saved.disc, x);
    saved.h = scan_sequential(saved.disc, u);
    return s5_readout(layer, x, saved.h);
}

template <typename T>
S5Grads<T> make_s5_grads(const S5Layer<T>& layer) {
    S5Grads<T> g;
    std::size_t m2 = layer.state_pairs(), n = layer.feature_dim();
    g.lambda_re.assign(m2, T(0));
    g.lambda_im.assign(m2, T(0));
    g.log_delta.assign(m2, T(0));
    g.b_re = Tensor<T>({m2, n});
    g.b_im = Tensor<T>({m2, n});
    g.c_re = Tensor<T>({n, m2});
    g.c_im = Tensor<T>({n, m2});
    g.d_skip.assign(n, T(0));
    return g;
}

template <typename T>
void s5_backward(const S5Layer<T>& layer, const S5Saved<T>& saved, const Tensor<T>& x,
                 const Tensor<T>& gy, S5Grads<T>& grads, Tensor<T>& gx) {
    std::size_t k_len = x.rows();
    std::size_t n = x.cols();
    std::size_t m2 = layer.state_pairs();
    if (!gy.same_shape(x) || !gx.same_shape(x)) throw ShapeError("s5_backward: shape mismatch");
    if (k_len == 0) return;

    const DiscreteS5<T>& disc = saved.disc;
    const ComplexSeq<T>& h = saved.h;

    // Skip path.
    for (std::size_t k = 0; k < k_len; ++k) {
        const T* gk = gy.ptr() + k * n;
        const T* xk = x.ptr() + k * n;
        T* gxk = gx.ptr() + k * n;
        for (std::size_t p = 0; p < n; ++p) {
            grads.d_skip[p] += gk[p] * xk[p];
            gxk[p] += gk[p] * layer.d_skip[p];
        }
    }

    // Readout: gh = 2 conj(C)^T gy ; gC += 2 gy conj(h)^T.
    ComplexSeq<T> gh{Tensor<T>({k_len, m2}), Tensor<T>({k_len, m2})};
    mmap(gh.re).noalias() = T(2) * (cmap(gy) * cmap(layer.c_re));
    mmap(gh.im).noalias() = T(-2) * (cmap(gy) * cmap(layer.c_im));
    mmap(grads.c_re).noalias() += T(2) * (cmap(gy).transpose() * cmap(h.re));
    mmap(grads.c_im).noalias() -= T(2) * (cmap(gy).transpose() * cmap(h.im));

    // Reversed scan: G_k = gh_k + conj(a) (.) G_{k+1}, reusing gh storage.
    const T* ar = disc.a_re.data();
    const T* ai = disc.a_im.data();
    for (std::size_t k = k_len - 1; k-- > 0;) {
        T* gr = gh.re.ptr() + k * m2;
        T* gi = gh.im.ptr() + k * m2;
        const T* nr = gh.re.ptr() + (k + 1) * m2;
        const T* ni = gh.im.ptr() + (k + 1) * m2;
        for (std::size_t j = 0; j < m2; ++j) {
            gr[j] += ar[j] * nr[j] + ai[j] * ni[j];
            gi[j] += ar[j] * ni[j] - ai[j] * nr[j];
        }
    }

    // ga = sum_k G_k (.) conj(h_{k-1})
    std::vector<T> ga_re(m2, T(0)), ga_im(m2, T(0));
    for (std::size_t k = 1; k < k_len; ++k) {
        const T* gr = gh.re.ptr() + k * m2;
        const T* gi = gh.im.ptr() + k * m2;
        const T* pr = h.re.ptr() + (k - 1) * m2;
        const T* pi = h.im.ptr() + (k - 1) * m2;
        for (std::size_t j = 0; j < m2; ++j) {
            ga_re[j] += gr[j] * pr[j] + gi[j] * pi[j];
            ga_im[j] += gi[j] * pr[j] - gr[j] * pi[j];
        }
    }

    // gB_bar = G^T x ; gx += Gre B_bar_re + Gim B_bar_im
    Tensor<T> gbbar_re({m2, n}), gbbar_im({m2, n});
    mmap(gbbar_re).noalias() = cmap(gh.re).transpose() * cmap(x);
    mmap(gbbar_im).noalias() = cmap(gh.im).transpose() * cmap(x);
    mmap(gx).noalias() += cmap(gh.re) * cmap(disc.b_re);
    mmap(gx).noalias() += cmap(gh.im) * cmap(disc.b_im);

    // Through the discretization, per state.
    for (std::size_t j = 0; j < m2; ++j) {
        T lr = layer.lambda_re[j], li = layer.lambda_im[j];
        T are = disc.a_re[j], aim = disc.a_im[j];
        T delta = std::exp(layer.log_delta[j]);
        T denom = lr * lr + li * li;
        // s = (a-1)/lambda (scale shared by the whole B row)
        T sre = ((are - T(1)) * lr + aim * li) / denom;
        T sim = (aim * lr - (are - T(1)) * li) / denom;

        // b_bar_row = s * b_row: gs = sum_p gB_bar conj(b); gb = gB_bar conj(s)
        T gs_re = T(0), gs_im = T(0);
        for (std::size_t p = 0; p < n; ++p) {
            T gbr = gbbar_re.at(j, p), gbi = gbbar_im.at(j, p);
            T br = layer.b_re.at(j, p), bi = layer.b_im.at(j, p);
            gs_re += gbr * br + gbi * bi;
            gs_im += gbi * br - gbr * bi;
            grads.b_re.at(j, p) += gbr * sre + gbi * sim;
            grads.b_im.at(j, p) += gbi * sre - gbr * sim;
        }

        // s = (a-1)/lambda: ds/da = 1/lambda; ds/dlambda = -(a-1)/lambda^2
        // (holomorphic, so chain with the conjugated derivative)
        T inv_lr = lr / denom, inv_li = -li / denom; // 1/lambda
        T ga2_re = gs_re * inv_lr + gs_im * inv_li;  // gs * conj(1/lambda)
        T ga2_im = gs_im * inv_lr - gs_re * inv_li;
        // w = -(a-1)/lambda^2 = -s/lambda
        T wre = -(sre * inv_lr - sim * inv_li);
        T wim = -(sre * inv_li + sim * inv_lr);
        T gl_re = gs_re * wre + gs_im * wim; // gs * conj(w)
        T gl_im = gs_im * wre - gs_re * wim;

        // a = exp(v), v = delta*lambda: gv = ga_total * conj(a)
        T gatot_re = ga_re[j] + ga2_re;
        T gatot_im = ga_im[j] + ga2_im;
        T gv_re = gatot_re * are + gatot_im * aim;
        T gv_im = gatot_im * are - gatot_re * aim;
        // v = delta*lambda: glambda += gv*delta; gdelta = Re(gv*conj(lambda))
        gl_re += gv_re * delta;
        gl_im += gv_im * delta;
        T gdelta = gv_re * lr + gv_im * li;

        grads.lambda_re[j] += gl_re;
        grads.lambda_im[j] += gl_im;
        grads.log_delta[j] += gdelta * delta;
    }
}

template <typename T>
S5Layer<T> init_s5(std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m % 2 != 0) throw std::invalid_argument("init_s5: m must be even");
    if (n < 2 || m < 2) throw std::invalid_argument("init_s5: n and m must be >= 2");
    std::size_t m2 = m / 2;

    Rng rng(seed);
    S5Layer<T> layer;
    layer.lambda_re.assign(m2, T(-0.5));
    layer.lambda_im.resize(m2);
    for (std::size_t j = 0; j < m2; ++j)
        layer.lambda_im[j] = static_cast<T>(M_PI * static_cast<double>(j));

    layer.b_re = Tensor<T>({m2, n});
    layer.b_im = Tensor<T>({m2, n});
    double b_scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < layer.b_re.size(); ++i) {
        layer.b_re[i] = static_cast<T>(rng.normal() * b_scale);
        layer.b_im[i] = static_cast<T>(rng.normal() * b_scale);
    }

    layer.c_re = Tensor<T>({n, m2});
    layer.c_im = Tensor<T>({n, m2});
    double c_scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < layer.c_re.size(); ++i) {
        layer.c_re[i] = static_cast<T>(rng.normal() * c_scale);
        layer.c_im[i] = static_cast<T>(rng.normal() * c_scale);
    }

    layer.d_skip.assign(n, T(1));
    layer.log_delta.resize(m2);
    double lo = std::log(1e-3), hi = std::log(1e-1);
    for (std::size_t j = 0; j < m2; ++j)
        layer.log_delta[j] = static_cast<T>(rng.uniform(lo, hi));
    return layer;
}

#define PENGUIN_INSTANTIATE_SSM(T)                                                               \
    template struct S5Layer<T>;                                                                  \
    template DiscreteS5<T> discretize_zoh<T>(const S5Layer<T>&);                                 \
    template ComplexSeq<T> scan_sequential<T>(const DiscreteS5<T>&, const ComplexSeq<T>&);       \
    template ComplexSeq<T> scan_parallel<T>(const DiscreteS5<T>&, const ComplexSeq<T>&);         \
    template void scan_inclusive_pairs<T>(std::vector<ScanElem<T>>&);                            \
    template Tensor<T> s5_forward<T>(const S5Layer<T>&, const Tensor<T>&);                       \
    template Tensor<T> s5_forward_saved<T>(const S5Layer<T>&, const Tensor<T>&, S5Saved<T>&);    \
    template S5Grads<T> make_s5_grads<T>(const S5Layer<T>&);                                     \
    template void s5_backward<T>(const S5Layer<T>&, const S5Saved<T>&, const Tensor<T>&,         \
                                 const Tensor<T>&, S5Grads<T>&, Tensor<T>&);                     \
    template S5Layer<T> init_s5<T>(std::size_t, std::size_t, std::uint64_t);

PENGUIN_INSTANTIATE_SSM(float)
PENGUIN_INSTANTIATE_SSM(double)

#undef PENGUIN_INSTANTIATE_SSM

} // namespace penguin
