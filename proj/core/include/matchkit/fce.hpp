// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "matchkit/encoders.hpp"
#include "matchkit/params.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit {

// Parameter prefixes of the three recurrent cells.
inline constexpr const char* kFceQueryCell = "fce.query";
inline constexpr const char* kFceForwardCell = "fce.support_fwd";
inline constexpr const char* kFceBackwardCell = "fce.support_bwd";

/// Registers one LSTM cell under `prefix`: W_{i,f,o,g}[hidden, input + state]
/// and b_{i,f,o,g}[hidden], forget bias 1.
void add_lstm_params(ModelParams& params, const std::string& prefix, std::size_t input_dim,
                     std::size_t state_dim, std::size_t hidden_dim, Rng& rng);
/// The query attLSTM (state width 2d) and the two support directions (state d).
void add_fce_params(ModelParams& params, std::size_t embedding_dim, Rng& rng);

struct LstmState {
  Tensor h;  // [m, hidden]
  Tensor c;  // [m, hidden]
};

/// z = [x, state]; i,f,o = sigmoid(W z + b), g = tanh(W_g z + b_g);
/// c' = f*c + i*g, h' = o*tanh(c'). All tensors are row batches.
LstmState lstm_step(const ModelParams& params, const std::string& prefix, const Tensor& x,
                    const Tensor& state, const Tensor& cell);

/// g(x_i, S) = h_fwd_i + h_bwd_i + g'(x_i) over the support sequence in the
/// given order. raw[k,d] -> [k,d].
Tensor embed_support_fce(const ModelParams& params, const Tensor& raw);

/// K read steps of the attention LSTM. f_prime is [d] or [m,d] (rows are
/// independent queries); g_set is [k,d]. h_0 = f', c_0 = 0. When
/// `read_weights` is given, the [m,k] attention of every read is appended.
Tensor embed_query_fce(const ModelParams& params, const Tensor& f_prime, const Tensor& g_set,
                       std::size_t steps, std::vector<Tensor>* read_weights = nullptr);

}  // namespace matchkit
