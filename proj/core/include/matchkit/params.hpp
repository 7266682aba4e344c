// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "matchkit/ops.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit {

/// Named trainable tensors plus batchnorm running statistics.
///
/// Copying deep-copies every tensor, so a copy can be trained without touching
/// the original.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(const ModelParams& other);
  ModelParams& operator=(const ModelParams& other);
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;

  /// Registers a tracked leaf. Duplicate names throw ConfigError.
  void add(const std::string& name, Tensor tensor);
  void add_batchnorm_stats(const std::string& name, std::size_t channels);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  BatchNormStats& stats(std::string_view name);
  const BatchNormStats& stats(std::string_view name) const;

  const std::map<std::string, Tensor, std::less<>>& tensors() const { return tensors_; }
  std::map<std::string, Tensor, std::less<>>& tensors() { return tensors_; }
  const std::map<std::string, BatchNormStats, std::less<>>& batchnorm_stats() const {
    return stats_;
  }
  std::map<std::string, BatchNormStats, std::less<>>& batchnorm_stats() { return stats_; }

  void zero_grad();
  std::size_t parameter_count() const;

  /// Exact equality of names, shapes and values (including running stats).
  bool identical(const ModelParams& other) const;

 private:
  std::map<std::string, Tensor, std::less<>> tensors_;
  std::map<std::string, BatchNormStats, std::less<>> stats_;
};

}  // namespace matchkit
