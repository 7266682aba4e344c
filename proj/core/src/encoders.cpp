// SPDX-License-Identifier: Apache-2.0
#include "matchkit/encoders.hpp"

#include <cmath>

#include "matchkit/error.hpp"
#include "matchkit/fce.hpp"

namespace matchkit {

namespace {

std::string block_name(std::size_t b) { return "conv.block" + std::to_string(b); }

std::string layer_name(std::size_t l) { return "mlp.layer" + std::to_string(l); }

std::vector<std::size_t> mlp_widths(const MlpEmbedConfig& config) {
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  widths.push_back(config.output_dim);
  return widths;
}

}  // namespace

std::size_t ConvEmbedConfig::output_spatial() const {
  std::size_t s = input_size;
  for (std::size_t b = 0; b < num_blocks; ++b) s /= 2;
  return s;
}

std::size_t ConvEmbedConfig::output_dim() const {
  const std::size_t s = output_spatial();
  return filters * s * s;
}

void ConvEmbedConfig::validate() const {
  if (num_blocks == 0 || filters == 0 || input_size == 0 || in_channels == 0) {
    throw ConfigError("conv encoder: blocks, filters, input size and channels must be positive");
  }
  if (output_spatial() == 0) {
    throw ConfigError("conv encoder: " + std::to_string(num_blocks) + " blocks collapse a " +
                      std::to_string(input_size) + " pixel input to nothing");
  }
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::conv ? "conv" : "mlp"; }

EncoderKind parse_encoder_kind(const std::string& text) {
  if (text == "conv") return EncoderKind::conv;
  if (text == "mlp") return EncoderKind::mlp;
  throw ConfigError("unknown encoder '" + text + "' (expected conv or mlp)");
}

std::size_t ModelConfig::embedding_dim() const {
  return encoder == EncoderKind::conv ? conv.output_dim() : mlp.output_dim;
}

Shape ModelConfig::input_shape() const {
  if (encoder == EncoderKind::conv) return {conv.in_channels, conv.input_size, conv.input_size};
  return {mlp.input_dim};
}

void ModelConfig::validate() const {
  if (encoder == EncoderKind::conv) {
    conv.validate();
  } else {
    if (mlp.input_dim == 0 || mlp.output_dim == 0) {
      throw ConfigError("mlp encoder: input and output dims must be positive");
    }
    for (std::size_t h : mlp.hidden_dims) {
      if (h == 0) throw ConfigError("mlp encoder: hidden dims must be positive");
    }
  }
}

void fill_glorot_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : values) v = dist(rng);
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams params;
  if (config.encoder == EncoderKind::conv) {
    const ConvEmbedConfig& c = config.conv;
    std::size_t channels = c.in_channels;
    for (std::size_t b = 0; b < c.num_blocks; ++b) {
      Tensor kernel = Tensor::zeros({c.filters, channels, 3, 3}, true);
      fill_glorot_uniform(kernel.leaf_data(), channels * 9, c.filters * 9, rng);
      const std::string name = block_name(b);
      params.add(name + ".kernel", std::move(kernel));
      params.add(name + ".bn.gamma", Tensor::full({c.filters}, 1.0, true));
      params.add(name + ".bn.beta", Tensor::zeros({c.filters}, true));
      params.add_batchnorm_stats(name + ".bn", c.filters);
      channels = c.filters;
    }
  } else {
    const auto widths = mlp_widths(config.mlp);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Tensor weight = Tensor::zeros({widths[l], widths[l + 1]}, true);
      fill_glorot_uniform(weight.leaf_data(), widths[l], widths[l + 1], rng);
      params.add(layer_name(l) + ".weight", std::move(weight));
      params.add(layer_name(l) + ".bias", Tensor::zeros({widths[l + 1]}, true));
    }
  }
  if (config.fce.enabled) add_fce_params(params, config.embedding_dim(), rng);
  return params;
}

namespace {

template <typename Params, typename BatchNormFn>
Tensor conv_stack(Params& params, const ConvEmbedConfig& config, const Tensor& images,
                  BatchNormFn&& norm) {
  config.validate();
  if (images.rank() != 4 || images.dim(1) != config.in_channels ||
      images.dim(2) != config.input_size || images.dim(3) != config.input_size) {
    throw ShapeError("embed_conv: expected [B," + std::to_string(config.in_channels) + "," +
                     std::to_string(config.input_size) + "," + std::to_string(config.input_size) +
                     "], got " + shape_str(images.shape()));
  }
  Tensor x = images;
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    const std::string name = block_name(b);
    x = conv2d(x, params.at(name + ".kernel"));
    x = norm(x, name);
    x = relu(x);
    x = maxpool2x2(x, PoolRounding::floor);
  }
  return reshape(x, {images.dim(0), config.output_dim()});
}

}  // namespace

Tensor embed_conv(ModelParams& params, const ConvEmbedConfig& config, const Tensor& images,
                  Mode mode) {
  return conv_stack(params, config, images, [&](const Tensor& x, const std::string& name) {
    return batchnorm(x, params.at(name + ".bn.gamma"), params.at(name + ".bn.beta"),
                     params.stats(name + ".bn"), mode);
  });
}

Tensor embed_conv(const ModelParams& params, const ConvEmbedConfig& config, const Tensor& images) {
  return conv_stack(params, config, images, [&](const Tensor& x, const std::string& name) {
    return batchnorm(x, params.at(name + ".bn.gamma"), params.at(name + ".bn.beta"),
                     params.stats(name + ".bn"));
  });
}

Tensor embed_mlp(const ModelParams& params, const MlpEmbedConfig& config, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != config.input_dim) {
    throw ShapeError("embed_mlp: expected [B," + std::to_string(config.input_dim) + "], got " +
                     shape_str(x.shape()));
  }
  const std::size_t layers = config.hidden_dims.size() + 1;
  Tensor h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_row(matmul(h, params.at(layer_name(l) + ".weight")),
                params.at(layer_name(l) + ".bias"));
    if (l + 1 < layers) h = relu(h);
  }
  return h;
}

Tensor embed(ModelParams& params, const ModelConfig& config, const Tensor& inputs, Mode mode) {
  if (config.encoder == EncoderKind::conv) return embed_conv(params, config.conv, inputs, mode);
  return embed_mlp(params, config.mlp, inputs);
}

Tensor embed(const ModelParams& params, const ModelConfig& config, const Tensor& inputs) {
  if (config.encoder == EncoderKind::conv) return embed_conv(params, config.conv, inputs);
  return embed_mlp(params, config.mlp, inputs);
}

}  // namespace matchkit
