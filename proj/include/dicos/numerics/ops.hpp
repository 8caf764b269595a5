#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "dicos/numerics/tensor.hpp"

// Differentiable tensor operations. Every op records a backward rule on the
// active tape when at least one input requires grad. Matrices are rank-2;
// "row" arguments may be [n] or [1 x n].
namespace dicos::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// x[n x d] + bias[d] broadcast over rows (the only broadcast supported).
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[n x d] with row i multiplied by s[i]; s has n elements.
Tensor scale_rows(const Tensor& x, const Tensor& s);
Tensor reshape(const Tensor& x, Shape shape);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);

/// axis is 0 or 1 for matrices (-1 means last). Max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor row(const Tensor& x, std::size_t i);
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);
Tensor element(const Tensor& x, std::size_t flat_index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Inverted dropout; identity when !train or rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train);

/// Identity forward. Backward passes the incoming gradient only while *open
/// is true at backward time; the flag may be set after the forward pass.
Tensor grad_gate(const Tensor& x, std::shared_ptr<const bool> open);

/// softmax(q k^T / sqrt(d)) v for q[qn x d], k[m x d], v[m x dv].
Tensor scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values);

}  // namespace dicos::ops
