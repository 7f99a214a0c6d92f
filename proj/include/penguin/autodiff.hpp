#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "penguin/tensor.hpp"

namespace penguin {

// Minimal reverse-mode tape over dense tensors. Ops are coarse (one node
// per layer-level operation) and each stores exactly the context its
// backward pass needs. Sequence tensors are time-major {K, n}; per-channel
// modulation vectors are {1, n}; scalars are {1}.
template <typename T>
class Tape {
public:
    using NodeId = std::int32_t;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId constant(Tensor<T> value);
    NodeId leaf(Tensor<T> value); // trainable parameter

    const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    // Zero tensor if the node never received gradient.
    const Tensor<T>& grad(NodeId id);

    // 1-channel convolution embedding: x {K}, w {n, kernel}, b {n} -> {K, n},
    // zero padding, odd kernel.
    NodeId conv1d(NodeId x, NodeId w, NodeId b);

    // Per-timestep affine: x {K, in}, w {out, in}, b {out} -> {K, out}.
    NodeId linear(NodeId x, NodeId w, NodeId b);

    // Per-timestep normalization over channels, eps = 1e-5.
    NodeId layernorm(NodeId x);
    NodeId layernorm_affine(NodeId x, NodeId gamma, NodeId beta); // gamma/beta {n}

    // y[k,:] = gamma (.) x[k,:] + beta with gamma/beta {1, n}.
    NodeId film(NodeId x, NodeId gamma, NodeId beta);
    NodeId scale_channels(NodeId x, NodeId alpha); // alpha {1, n}

    NodeId gelu(NodeId x); // exact erf form
    NodeId add(NodeId a, NodeId b);
    NodeId add_const(NodeId x, T c);
    NodeId mul_const(NodeId x, T c);

    // Fused diagonal state-space layer. Parameter nodes:
    //   lambda_log_neg_re {m2}, lambda_im {m2}, log_delta {m2},
    //   b_re/b_im {m2, n}, c_re/c_im {n, m2}, d_skip {n}.
    // The continuous-time real part is -exp(lambda_log_neg_re), which keeps
    // Re(lambda) < 0 under unconstrained updates.
    struct S5Nodes {
        NodeId lambda_log_neg_re, lambda_im, log_delta;
        NodeId b_re, b_im, c_re, c_im, d_skip;
    };
    NodeId s5(NodeId x, const S5Nodes& p);

    // Scalar outputs.
    NodeId mse(NodeId pred, Tensor<T> target); // mean over all elements
    NodeId sum_squares(NodeId x);

    // Reverse pass from a scalar node; repeated calls are not supported.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad; // empty until touched
        std::function<void()> back;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    Tensor<T> empty_grad_;

    NodeId push(Tensor<T> value, bool requires_grad, std::function<void()> back);
    Tensor<T>& grad_buffer(NodeId id); // allocates zeros on first touch
    bool wants_grad(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].requires_grad;
    }
    friend struct TapeOps;
};

} // namespace penguin
