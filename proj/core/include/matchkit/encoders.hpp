// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "matchkit/ops.hpp"
#include "matchkit/params.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit {

using Rng = std::mt19937_64;

/// Stack of {conv 3x3, batchnorm, relu, maxpool 2x2} blocks.
struct ConvEmbedConfig {
  std::size_t num_blocks = 4;
  std::size_t filters = 64;
  std::size_t input_size = 28;
  std::size_t in_channels = 1;

  /// Spatial extent after all blocks (floor halving per block).
  std::size_t output_spatial() const;
  std::size_t output_dim() const;
  void validate() const;
};

struct MlpEmbedConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden_dims{64};
  std::size_t output_dim = 64;
};

struct FceConfig {
  bool enabled = false;
  std::size_t steps = 5;
};

enum class EncoderKind { conv, mlp };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::mlp;
  ConvEmbedConfig conv;
  MlpEmbedConfig mlp;
  FceConfig fce;

  std::size_t embedding_dim() const;
  /// Per-example input shape expected by the encoder.
  Shape input_shape() const;
  void validate() const;
};

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
void fill_glorot_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng);

/// Conv kernels and affine weights get Glorot-uniform values, batchnorm
/// gamma = 1 / beta = 0, biases 0, and LSTM forget-gate biases 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// images[B, C, S, S] -> [B, output_dim]. Train mode uses batch statistics
/// and updates the running statistics held in `params`.
Tensor embed_conv(ModelParams& params, const ConvEmbedConfig& config, const Tensor& images,
                  Mode mode);
/// Eval-mode embedding; params are not modified.
Tensor embed_conv(const ModelParams& params, const ConvEmbedConfig& config, const Tensor& images);

/// x[B, input_dim] -> [B, output_dim]; relu between layers, none after the last.
Tensor embed_mlp(const ModelParams& params, const MlpEmbedConfig& config, const Tensor& x);

/// Shared f' = g' encoder. `inputs` has shape [B, input_shape()...].
Tensor embed(ModelParams& params, const ModelConfig& config, const Tensor& inputs, Mode mode);
Tensor embed(const ModelParams& params, const ModelConfig& config, const Tensor& inputs);

}  // namespace matchkit
