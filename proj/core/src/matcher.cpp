// SPDX-License-Identifier: Apache-2.0
#include "matchkit/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

SupportSet SupportSet::make(Tensor embeddings, std::vector<int> class_ids,
                            std::size_t num_classes) {
  if (class_ids.empty()) throw ConfigError("support set: empty");
  if (embeddings.rank() != 2 || embeddings.dim(0) != class_ids.size()) {
    throw ShapeError("support set: embeddings " + shape_str(embeddings.shape()) + " for " +
                     std::to_string(class_ids.size()) + " labels");
  }
  std::vector<bool> seen(num_classes, false);
  for (int id : class_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= num_classes) {
      throw ConfigError("support set: label " + std::to_string(id) + " outside [0," +
                        std::to_string(num_classes) + ")");
    }
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!seen[c]) throw ConfigError("support set: class " + std::to_string(c) + " has no example");
  }
  return SupportSet{std::move(embeddings), std::move(class_ids), num_classes};
}

Tensor SupportSet::one_hot() const {
  std::vector<double> y(size() * num_classes, 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    y[i * num_classes + static_cast<std::size_t>(class_ids[i])] = 1.0;
  }
  return Tensor({size(), num_classes}, std::move(y));
}

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::softmax_cosine:
      return "softmax-cosine";
    case AttentionKind::knn:
      return "knn";
    case AttentionKind::kde:
      return "kde";
  }
  return "softmax-cosine";
}

AttentionKind parse_attention_kind(const std::string& text) {
  if (text == "softmax-cosine") return AttentionKind::softmax_cosine;
  if (text == "knn") return AttentionKind::knn;
  if (text == "kde") return AttentionKind::kde;
  throw ConfigError("unknown attention '" + text + "' (expected softmax-cosine, knn or kde)");
}

namespace {

Tensor as_rows(const Tensor& query) {
  if (query.rank() != 1) throw ShapeError("attention: query must be rank 1, got " + shape_str(query.shape()));
  return reshape(query, {1, query.dim(0)});
}

void check_queries(const Tensor& queries, const SupportSet& support) {
  if (support.size() == 0) throw ConfigError("attention: empty support set");
  if (queries.rank() != 2 || queries.dim(1) != support.embeddings.dim(1)) {
    throw ShapeError("attention: queries " + shape_str(queries.shape()) + " vs support " +
                     shape_str(support.embeddings.shape()));
  }
}

Tensor knn_weights(const Tensor& queries, const SupportSet& support, std::size_t drop) {
  const std::size_t k = support.size();
  if (drop >= k) {
    throw ConfigError("attend_knn: b=" + std::to_string(drop) + " must be < k=" + std::to_string(k));
  }
  const Tensor sims = [&] {
    NoGradGuard no_grad;
    return cosine_matrix(queries, support.embeddings);
  }();
  const std::size_t m = queries.dim(0);
  const std::size_t keep = k - drop;
  std::vector<double> w(m * k, 0.0);
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < m; ++i) {
    const double* s = sims.data().data() + i * k;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [s](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    for (std::size_t r = 0; r < keep; ++r) w[i * k + order[r]] = 1.0 / static_cast<double>(keep);
  }
  return Tensor({m, k}, std::move(w));
}

Tensor kde_weights(const Tensor& queries, const SupportSet& support, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ConfigError("attend_kde: bandwidth must be positive");
  const std::size_t m = queries.dim(0);
  const std::size_t k = support.size();
  const std::size_t d = queries.dim(1);
  auto q = queries.data();
  auto s = support.embeddings.data();
  std::vector<double> logits(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = q[i * d + t] - s[j * d + t];
        d2 += diff * diff;
      }
      logits[i * k + j] = -d2 / (2.0 * bandwidth * bandwidth);
    }
  }
  NoGradGuard no_grad;
  return softmax(Tensor({m, k}, std::move(logits)));
}

}  // namespace

Tensor attend_batch(const Tensor& queries, const SupportSet& support, const AttentionSpec& spec) {
  check_queries(queries, support);
  switch (spec.kind) {
    case AttentionKind::softmax_cosine:
      return softmax(cosine_matrix(queries, support.embeddings));
    case AttentionKind::knn:
      return knn_weights(queries, support, spec.knn_drop);
    case AttentionKind::kde:
      return kde_weights(queries, support, spec.kde_bandwidth);
  }
  throw ConfigError("attention: unknown kind");
}

AttentionWeights attend_softmax_cosine(const Tensor& query, const SupportSet& support) {
  AttentionSpec spec;
  return attend(query, support, spec);
}

AttentionWeights attend_knn(const Tensor& query, const SupportSet& support, std::size_t drop) {
  AttentionSpec spec;
  spec.kind = AttentionKind::knn;
  spec.knn_drop = drop;
  return attend(query, support, spec);
}

AttentionWeights attend_kde(const Tensor& query, const SupportSet& support, double bandwidth) {
  AttentionSpec spec;
  spec.kind = AttentionKind::kde;
  spec.kde_bandwidth = bandwidth;
  return attend(query, support, spec);
}

AttentionWeights attend(const Tensor& query, const SupportSet& support, const AttentionSpec& spec) {
  Tensor w = attend_batch(as_rows(query), support, spec);
  return AttentionWeights{reshape(w, {support.size()}), spec.kind};
}

Tensor classify_batch(const Tensor& weights, const SupportSet& support) {
  if (weights.rank() != 2 || weights.dim(1) != support.size()) {
    throw ShapeError("classify: weights " + shape_str(weights.shape()) + " for " +
                     std::to_string(support.size()) + " supports");
  }
  return matmul(weights, support.one_hot());
}

ClassDistribution classify(const AttentionWeights& weights, const SupportSet& support) {
  if (weights.values.rank() != 1 || weights.values.dim(0) != support.size()) {
    throw ShapeError("classify: " + std::to_string(weights.values.numel()) + " weights for " +
                     std::to_string(support.size()) + " supports");
  }
  Tensor p = classify_batch(reshape(weights.values, {1, support.size()}), support);
  return ClassDistribution{reshape(p, {support.num_classes})};
}

int predict(const ClassDistribution& dist) {
  auto p = dist.probs.data();
  // max_element returns the first maximum, i.e. the lowest index on ties.
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<int> predict_batch(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("predict_batch: expected [m,N]");
  const std::size_t m = probs.dim(0);
  const std::size_t n = probs.dim(1);
  std::vector<int> out(m);
  auto p = probs.data();
  for (std::size_t i = 0; i < m; ++i) {
    auto first = p.begin() + static_cast<std::ptrdiff_t>(i * n);
    out[i] = static_cast<int>(std::max_element(first, first + static_cast<std::ptrdiff_t>(n)) - first);
  }
  return out;
}

}  // namespace matchkit
