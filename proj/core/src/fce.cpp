// SPDX-License-Identifier: Apache-2.0
#include "matchkit/fce.hpp"

#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

namespace {

constexpr const char* kGates[] = {"i", "f", "o", "g"};

}  // namespace

void add_lstm_params(ModelParams& params, const std::string& prefix, std::size_t input_dim,
                     std::size_t state_dim, std::size_t hidden_dim, Rng& rng) {
  for (const char* gate : kGates) {
    Tensor w = Tensor::zeros({hidden_dim, input_dim + state_dim}, true);
    fill_glorot_uniform(w.leaf_data(), input_dim + state_dim, hidden_dim, rng);
    params.add(prefix + ".W_" + gate, std::move(w));
    const double bias = std::string(gate) == "f" ? 1.0 : 0.0;
    params.add(prefix + ".b_" + gate, Tensor::full({hidden_dim}, bias, true));
  }
}

void add_fce_params(ModelParams& params, std::size_t embedding_dim, Rng& rng) {
  const std::size_t d = embedding_dim;
  add_lstm_params(params, kFceQueryCell, d, 2 * d, d, rng);
  add_lstm_params(params, kFceForwardCell, d, d, d, rng);
  add_lstm_params(params, kFceBackwardCell, d, d, d, rng);
}

LstmState lstm_step(const ModelParams& params, const std::string& prefix, const Tensor& x,
                    const Tensor& state, const Tensor& cell) {
  const Tensor z = concat({x, state}, 1);
  auto gate = [&](const char* name) {
    return add_row(matmul_nt(z, params.at(prefix + ".W_" + name)), params.at(prefix + ".b_" + name));
  };
  const Tensor i = sigmoid(gate("i"));
  const Tensor f = sigmoid(gate("f"));
  const Tensor o = sigmoid(gate("o"));
  const Tensor g = tanh(gate("g"));
  Tensor c = add(mul(f, cell), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return LstmState{std::move(h), std::move(c)};
}

Tensor embed_support_fce(const ModelParams& params, const Tensor& raw) {
  if (raw.rank() != 2) throw ShapeError("embed_support_fce: expected [k,d], got " + shape_str(raw.shape()));
  const std::size_t k = raw.dim(0);
  const std::size_t d = raw.dim(1);
  if (k == 0) throw ConfigError("embed_support_fce: empty support set");

  std::vector<Tensor> inputs;
  inputs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) inputs.push_back(slice_rows(raw, i, i + 1));

  std::vector<Tensor> forward(k);
  LstmState s{Tensor::zeros({1, d}), Tensor::zeros({1, d})};
  for (std::size_t i = 0; i < k; ++i) {
    s = lstm_step(params, kFceForwardCell, inputs[i], s.h, s.c);
    forward[i] = s.h;
  }
  std::vector<Tensor> backward_states(k);
  s = LstmState{Tensor::zeros({1, d}), Tensor::zeros({1, d})};
  for (std::size_t i = k; i-- > 0;) {
    s = lstm_step(params, kFceBackwardCell, inputs[i], s.h, s.c);
    backward_states[i] = s.h;
  }
  return add(add(concat(forward, 0), concat(backward_states, 0)), raw);
}

Tensor embed_query_fce(const ModelParams& params, const Tensor& f_prime, const Tensor& g_set,
                       std::size_t steps, std::vector<Tensor>* read_weights) {
  const bool single = f_prime.rank() == 1;
  const Tensor f = single ? reshape(f_prime, {1, f_prime.dim(0)}) : f_prime;
  if (f.rank() != 2 || g_set.rank() != 2 || f.dim(1) != g_set.dim(1)) {
    throw ShapeError("embed_query_fce: f' " + shape_str(f_prime.shape()) + " vs g(S) " +
                     shape_str(g_set.shape()));
  }
  Tensor h = f;
  Tensor c = Tensor::zeros(f.shape());
  for (std::size_t step = 0; step < steps; ++step) {
    const Tensor a = softmax(matmul_nt(h, g_set));
    if (read_weights) read_weights->push_back(a);
    const Tensor r = matmul(a, g_set);
    LstmState next = lstm_step(params, kFceQueryCell, f, concat({h, r}, 1), c);
    h = add(next.h, f);
    c = std::move(next.c);
  }
  return single ? reshape(h, {f_prime.dim(0)}) : h;
}

}  // namespace matchkit
