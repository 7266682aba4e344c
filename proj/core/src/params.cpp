// SPDX-License-Identifier: Apache-2.0
#include "matchkit/params.hpp"

#include <algorithm>

#include "matchkit/error.hpp"

namespace matchkit {

ModelParams::ModelParams(const ModelParams& other) : stats_(other.stats_) {
  for (const auto& [name, tensor] : other.tensors_) tensors_.emplace(name, tensor.clone());
}

ModelParams& ModelParams::operator=(const ModelParams& other) {
  if (this != &other) {
    ModelParams copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void ModelParams::add(const std::string& name, Tensor tensor) {
  if (tensors_.count(name) || stats_.count(name)) {
    throw ConfigError("params: duplicate parameter name '" + name + "'");
  }
  if (!tensor.is_leaf()) tensor = tensor.detach();
  if (!tensor.requires_grad()) tensor = Tensor(tensor.shape(), {tensor.data().begin(), tensor.data().end()}, true);
  tensors_.emplace(name, std::move(tensor));
}

void ModelParams::add_batchnorm_stats(const std::string& name, std::size_t channels) {
  if (tensors_.count(name) || stats_.count(name)) {
    throw ConfigError("params: duplicate parameter name '" + name + "'");
  }
  stats_.emplace(name, BatchNormStats::identity(channels));
}

bool ModelParams::contains(std::string_view name) const {
  return tensors_.find(name) != tensors_.end();
}

const Tensor& ModelParams::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("params: no parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ModelParams::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("params: no parameter '" + std::string(name) + "'");
  return it->second;
}

BatchNormStats& ModelParams::stats(std::string_view name) {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw ConfigError("params: no batchnorm stats '" + std::string(name) + "'");
  return it->second;
}

const BatchNormStats& ModelParams::stats(std::string_view name) const {
  auto it = stats_.find(name);
  if (it == stats_.end()) throw ConfigError("params: no batchnorm stats '" + std::string(name) + "'");
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [name, tensor] : tensors_) tensor.zero_grad();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : tensors_) n += tensor.numel();
  return n;
}

bool ModelParams::identical(const ModelParams& other) const {
  if (tensors_.size() != other.tensors_.size() || stats_.size() != other.stats_.size()) return false;
  for (const auto& [name, tensor] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end() || it->second.shape() != tensor.shape()) return false;
    auto a = tensor.data();
    auto b = it->second.data();
    if (!std::equal(a.begin(), a.end(), b.begin())) return false;
  }
  for (const auto& [name, s] : stats_) {
    auto it = other.stats_.find(name);
    if (it == other.stats_.end()) return false;
    if (it->second.mean != s.mean || it->second.var != s.var) return false;
  }
  return true;
}

}  // namespace matchkit
