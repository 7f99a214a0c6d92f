#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "penguin/tensor.hpp"

namespace penguin {

// Diagonal continuous-time state-space layer in conjugate-pair form: only
// one eigenvalue of each pair is stored and the readout doubles the real
// part. State dimension m is the real-equivalent size, so m/2 pairs.
template <typename T>
struct S5Layer {
    std::vector<T> lambda_re, lambda_im; // m/2, Re < 0
    Tensor<T> b_re, b_im;                // {m/2, n}
    Tensor<T> c_re, c_im;                // {n, m/2}
    std::vector<T> d_skip;               // n, diagonal feedthrough
    std::vector<T> log_delta;            // m/2, log of per-state step size

    std::size_t state_pairs() const { return lambda_re.size(); }
    std::size_t feature_dim() const { return d_skip.size(); }
    void validate() const;
};

template <typename T>
struct DiscreteS5 {
    std::vector<T> a_re, a_im; // m/2, diagonal of A_bar, |a| < 1
    Tensor<T> b_re, b_im;      // {m/2, n}
};

// A pair of same-shape {K, m/2} tensors holding one complex sequence.
template <typename T>
struct ComplexSeq {
    Tensor<T> re, im;
};

// Zero-order hold: a_j = exp(delta_j lambda_j), b_bar_j = ((a_j-1)/lambda_j) b_j.
template <typename T>
DiscreteS5<T> discretize_zoh(const S5Layer<T>& layer);

// h_k = a (.) h_{k-1} + u_k with h_0 = 0; u is {K, m/2} complex, time-major.
template <typename T>
ComplexSeq<T> scan_sequential(const DiscreteS5<T>& disc, const ComplexSeq<T>& u);

// Same recurrence evaluated with a work-efficient (Blelloch) scan over the
// associative operator (a1,b1) o (a2,b2) = (a2 a1, a2 b1 + b2).
template <typename T>
ComplexSeq<T> scan_parallel(const DiscreteS5<T>& disc, const ComplexSeq<T>& u);

// The scan monoid, exposed for direct tests of the operator itself.
template <typename T>
struct ScanElem {
    std::complex<T> a{1, 0};
    std::complex<T> b{0, 0};
};

template <typename T>
ScanElem<T> scan_compose(const ScanElem<T>& first, const ScanElem<T>& second) {
    return {second.a * first.a, second.a * first.b + second.b};
}

// In-place inclusive scan of a general element sequence (per-element a).
template <typename T>
void scan_inclusive_pairs(std::vector<ScanElem<T>>& elems);

// y_k = 2 Re(C h_k) + d (.) x_k over the full sequence; x and y are {K, n}.
template <typename T>
Tensor<T> s5_forward(const S5Layer<T>& layer, const Tensor<T>& x);

// Forward pass that keeps what the backward pass needs.
template <typename T>
struct S5Saved {
    DiscreteS5<T> disc;
    ComplexSeq<T> h;
};

template <typename T>
Tensor<T> s5_forward_saved(const S5Layer<T>& layer, const Tensor<T>& x, S5Saved<T>& saved);

// Gradients with respect to the raw layer parameters (lambda components,
// not any reparameterization).
template <typename T>
struct S5Grads {
    std::vector<T> lambda_re, lambda_im;
    std::vector<T> log_delta;
    Tensor<T> b_re, b_im;
    Tensor<T> c_re, c_im;
    std::vector<T> d_skip;
};

template <typename T>
S5Grads<T> make_s5_grads(const S5Layer<T>& layer);

// Accumulates into `grads` and `gx` (gx shape {K, n}). The state adjoint is
// itself a reversed scan.
template <typename T>
void s5_backward(const S5Layer<T>& layer, const S5Saved<T>& saved, const Tensor<T>& x,
                 const Tensor<T>& gy, S5Grads<T>& grads, Tensor<T>& gx);

// S4D-Lin style initialization: lambda_j = -0.5 + i pi j; B, C seeded
// normal scaled by 1/sqrt(m) and 1/sqrt(n); d = 1; log_delta log-uniform
// over [1e-3, 1e-1].
template <typename T>
S5Layer<T> init_s5(std::size_t n, std::size_t m, std::uint64_t seed);

} // namespace penguin
