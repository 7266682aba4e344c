// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "matchkit/tensor.hpp"

namespace matchkit {

/// Embedded support set: embeddings[k,d] with class-local labels in [0,N).
struct SupportSet {
  Tensor embeddings;
  std::vector<int> class_ids;
  std::size_t num_classes = 0;

  /// Validates that every label is in range and every class is present.
  static SupportSet make(Tensor embeddings, std::vector<int> class_ids, std::size_t num_classes);

  std::size_t size() const { return class_ids.size(); }
  /// [k, N] one-hot label matrix.
  Tensor one_hot() const;
};

enum class AttentionKind { softmax_cosine, knn, kde };

std::string to_string(AttentionKind kind);
AttentionKind parse_attention_kind(const std::string& text);

struct AttentionSpec {
  AttentionKind kind = AttentionKind::softmax_cosine;
  std::size_t knn_drop = 0;     // b: number of furthest supports zeroed
  double kde_bandwidth = 1.0;
};

struct AttentionWeights {
  Tensor values;  // [k]
  AttentionKind kind = AttentionKind::softmax_cosine;
};

struct ClassDistribution {
  Tensor probs;  // [N]
};

/// a_i = exp(cos(q, s_i)) / sum_j exp(cos(q, s_j)). Differentiable.
AttentionWeights attend_softmax_cosine(const Tensor& query, const SupportSet& support);
/// Uniform 1/(k-b) on the k-b most cosine-similar supports, zero elsewhere.
/// Ties in similarity prefer the lower support index.
AttentionWeights attend_knn(const Tensor& query, const SupportSet& support, std::size_t drop);
/// Normalised Gaussian kernel exp(-|q - s_i|^2 / (2 h^2)).
AttentionWeights attend_kde(const Tensor& query, const SupportSet& support, double bandwidth);
AttentionWeights attend(const Tensor& query, const SupportSet& support, const AttentionSpec& spec);

/// P(y | q, S) = sum_i a_i y_i.
ClassDistribution classify(const AttentionWeights& weights, const SupportSet& support);
/// Argmax with ties resolved to the lowest class index.
int predict(const ClassDistribution& dist);

// Row-batched forms: queries[m,d] -> weights[m,k] -> probs[m,N].
Tensor attend_batch(const Tensor& queries, const SupportSet& support, const AttentionSpec& spec);
Tensor classify_batch(const Tensor& weights, const SupportSet& support);
std::vector<int> predict_batch(const Tensor& probs);

}  // namespace matchkit
