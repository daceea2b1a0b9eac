#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tvq/tensor.hpp"

namespace tvq {

// K x D table of texture code vectors with usage statistics. Entries are a
// plain tensor so they can be trained by gradient and checkpointed with the
// rest of the model.
struct Codebook {
  Tensor entries;                     // (K, D)
  std::vector<int64_t> usage_counts;  // hits since last reset
  bool seen_lookup = false;

  int K() const { return entries.dim(0); }
  int D() const { return entries.dim(1); }
};

enum class CodebookInit { UniformRandom, KmeansOnBatch };

// Deterministic given seed. Kmeans runs fixed-iteration Lloyd's on the given
// feature batch (tokens x D) and requires at least K distinct rows.
Codebook init_codebook(int K, int D, uint64_t seed, CodebookInit method,
                       const Tensor& feature_batch = Tensor());

struct QuantizeResult {
  std::vector<int> indices;          // one per token position
  Tensor quantized;                  // (tokens, D), rows copied from entries
  std::vector<scalar> sq_distances;  // squared distance to the chosen entry
};

// Maps each token (row of features) to the argmin squared-Euclidean entry,
// ties broken by lowest index. Increments usage counts.
QuantizeResult nearest_lookup(const Tensor& features, Codebook& cb);

// Same mapping without touching usage counts (target generation, eval).
QuantizeResult quantize_readonly(const Tensor& features, const Codebook& cb);

// Forward: hard-quantized features (bit-equal to nearest_lookup().quantized).
// Backward: gradient copies unchanged onto features.
Tensor vq_ste_passthrough(const Tensor& features, Codebook& cb);

// codebook_loss = mean_t ||detach(features_t) - entry_t||^2  (trains entries)
// commit_loss   = mean_t ||features_t - detach(entry_t)||^2  (trains encoder)
std::pair<Tensor, Tensor> vq_losses(const Tensor& features, const QuantizeResult& result, Codebook& cb);

// Forward: exact argmax one-hot rows (ties -> lowest index). Backward: the
// softmax-probabilities path.
Tensor one_hot_ste(const Tensor& logits);

// Gathers entry rows; out-of-range indices are an error.
Tensor decode_indices(const std::vector<int>& indices, const Codebook& cb);

struct UsageStats {
  double perplexity;
  int dead_count;
};

// Requires at least one lookup since the last reset.
UsageStats usage_stats(const Codebook& cb);
void reset_usage(Codebook& cb);

// Reassigns entries with usage below threshold to randomly chosen rows of
// feature_batch. Returns the number of entries revived.
int revive_dead_codes(Codebook& cb, const Tensor& feature_batch, int64_t threshold, uint64_t seed);

}  // namespace tvq
