#include "tvq/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "tvq/rng.hpp"

namespace tvq {

namespace {

void check_features(const Tensor& features, int D, const char* who) {
  if (!features.defined() || features.rank() != 2)
    throw std::invalid_argument(std::string(who) + ": features must be (tokens, D)");
  if (features.dim(1) != D)
    throw std::invalid_argument(std::string(who) + ": feature width " + std::to_string(features.dim(1)) +
                                " does not match codebook D=" + std::to_string(D));
}

}  // namespace

Codebook init_codebook(int K, int D, uint64_t seed, CodebookInit method, const Tensor& feature_batch) {
  if (K < 2) throw std::invalid_argument("init_codebook: K must be >= 2, got " + std::to_string(K));
  if (D < 1) throw std::invalid_argument("init_codebook: D must be >= 1, got " + std::to_string(D));

  std::vector<scalar> table(static_cast<size_t>(K) * D);
  if (method == CodebookInit::UniformRandom) {
    Rng rng(seed);
    const double span = 1.0 / K;
    for (auto& v : table) v = static_cast<scalar>(rng.uniform(-span, span));
  } else {
    check_features(feature_batch, D, "init_codebook");
    const int T = feature_batch.dim(0);
    auto f = feature_batch.values();
    // Distinct-row count gates K.
    std::set<std::vector<scalar>> distinct;
    for (int t = 0; t < T; t++)
      distinct.insert(std::vector<scalar>(f.begin() + static_cast<int64_t>(t) * D,
                                          f.begin() + static_cast<int64_t>(t + 1) * D));
    if (static_cast<int>(distinct.size()) < K)
      throw std::invalid_argument("init_codebook: kmeans needs at least K distinct samples, got " +
                                  std::to_string(distinct.size()) + " distinct of K=" + std::to_string(K));

    // Seed centroids with K distinct rows, then fixed-iteration Lloyd's.
    Rng rng(seed);
    std::vector<int> chosen;
    std::set<std::vector<scalar>> used;
    while (static_cast<int>(chosen.size()) < K) {
      const int t = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
      std::vector<scalar> row(f.begin() + static_cast<int64_t>(t) * D,
                              f.begin() + static_cast<int64_t>(t + 1) * D);
      if (used.insert(row).second) chosen.push_back(t);
    }
    for (int k = 0; k < K; k++)
      std::copy_n(f.data() + static_cast<int64_t>(chosen[static_cast<size_t>(k)]) * D, D,
                  table.data() + static_cast<int64_t>(k) * D);

    const int iters = 25;
    std::vector<int> assign(static_cast<size_t>(T));
    std::vector<double> sums(static_cast<size_t>(K) * D);
    std::vector<int> counts(static_cast<size_t>(K));
    for (int it = 0; it < iters; it++) {
      for (int t = 0; t < T; t++) {
        const scalar* ft = f.data() + static_cast<int64_t>(t) * D;
        int best = 0;
        scalar bestd = std::numeric_limits<scalar>::max();
        for (int k = 0; k < K; k++) {
          const scalar* ek = table.data() + static_cast<int64_t>(k) * D;
          scalar d2 = 0;
          for (int j = 0; j < D; j++) {
            const scalar diff = ft[j] - ek[j];
            d2 += diff * diff;
          }
          if (d2 < bestd) {
            bestd = d2;
            best = k;
          }
        }
        assign[static_cast<size_t>(t)] = best;
      }
      std::fill(sums.begin(), sums.end(), 0.0);
      std::fill(counts.begin(), counts.end(), 0);
      for (int t = 0; t < T; t++) {
        const int k = assign[static_cast<size_t>(t)];
        counts[static_cast<size_t>(k)]++;
        for (int j = 0; j < D; j++)
          sums[static_cast<int64_t>(k) * D + j] += static_cast<double>(f[static_cast<int64_t>(t) * D + j]);
      }
      for (int k = 0; k < K; k++) {
        if (counts[static_cast<size_t>(k)] == 0) {
          // Re-seed empty cluster with a random sample.
          const int t = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
          std::copy_n(f.data() + static_cast<int64_t>(t) * D, D, table.data() + static_cast<int64_t>(k) * D);
          continue;
        }
        for (int j = 0; j < D; j++)
          table[static_cast<int64_t>(k) * D + j] =
              static_cast<scalar>(sums[static_cast<int64_t>(k) * D + j] / counts[static_cast<size_t>(k)]);
      }
    }
  }

  Codebook cb;
  cb.entries = make_tensor({K, D}, std::move(table));
  cb.usage_counts.assign(static_cast<size_t>(K), 0);
  return cb;
}

QuantizeResult quantize_readonly(const Tensor& features, const Codebook& cb) {
  check_features(features, cb.D(), "nearest_lookup");
  const int T = features.dim(0), K = cb.K(), D = cb.D();
  auto f = features.values();
  auto e = cb.entries.values();

  QuantizeResult qr;
  qr.indices.resize(static_cast<size_t>(T));
  qr.sq_distances.resize(static_cast<size_t>(T));
  std::vector<scalar> quant(static_cast<size_t>(T) * D);
  for (int t = 0; t < T; t++) {
    const scalar* ft = f.data() + static_cast<int64_t>(t) * D;
    int best = 0;
    scalar bestd = std::numeric_limits<scalar>::max();
    for (int k = 0; k < K; k++) {
      const scalar* ek = e.data() + static_cast<int64_t>(k) * D;
      scalar d2 = 0;
      for (int j = 0; j < D; j++) {
        const scalar diff = ft[j] - ek[j];
        d2 += diff * diff;
      }
      if (d2 < bestd) {  // strict: ties keep the lowest index
        bestd = d2;
        best = k;
      }
    }
    qr.indices[static_cast<size_t>(t)] = best;
    qr.sq_distances[static_cast<size_t>(t)] = bestd;
    std::copy_n(e.data() + static_cast<int64_t>(best) * D, D, quant.data() + static_cast<int64_t>(t) * D);
  }
  qr.quantized = make_tensor({T, D}, std::move(quant));
  return qr;
}

QuantizeResult nearest_lookup(const Tensor& features, Codebook& cb) {
  QuantizeResult qr = quantize_readonly(features, cb);
  for (int idx : qr.indices) cb.usage_counts[static_cast<size_t>(idx)]++;
  cb.seen_lookup = true;
  return qr;
}

Tensor vq_ste_passthrough(const Tensor& features, Codebook& cb) {
  auto qr = nearest_lookup(features, cb);
  return ste_passthrough(features, qr.quantized);
}

std::pair<Tensor, Tensor> vq_losses(const Tensor& features, const QuantizeResult& result, Codebook& cb) {
  check_features(features, cb.D(), "vq_losses");
  const int T = features.dim(0);
  if (static_cast<int>(result.indices.size()) != T)
    throw std::invalid_argument("vq_losses: result carries " + std::to_string(result.indices.size()) +
                                " indices for " + std::to_string(T) + " tokens");
  // mean over tokens of the squared Euclidean distance (summed over D)
  const double inv_tokens = 1.0 / T;

  Tensor chosen = gather_rows(cb.entries, result.indices);  // grads reach entries
  Tensor df = sub(detach(features), chosen);
  Tensor codebook_loss = scalar_mul(reduce_sum(mul(df, df)), inv_tokens);

  Tensor dc = sub(features, detach(chosen));
  Tensor commit_loss = scalar_mul(reduce_sum(mul(dc, dc)), inv_tokens);
  return {codebook_loss, commit_loss};
}

Tensor one_hot_ste(const Tensor& logits) { return argmax_one_hot_ste(logits); }

Tensor decode_indices(const std::vector<int>& indices, const Codebook& cb) {
  for (int idx : indices)
    if (idx < 0 || idx >= cb.K())
      throw std::invalid_argument("decode_indices: index " + std::to_string(idx) +
                                  " out of range for K=" + std::to_string(cb.K()));
  return gather_rows(cb.entries, indices);
}

UsageStats usage_stats(const Codebook& cb) {
  if (!cb.seen_lookup) throw std::runtime_error("usage_stats: no lookups since last reset");
  int64_t total = 0;
  for (int64_t c : cb.usage_counts) total += c;
  UsageStats st{0.0, 0};
  double entropy = 0.0;
  for (int64_t c : cb.usage_counts) {
    if (c == 0) {
      st.dead_count++;
      continue;
    }
    const double p = static_cast<double>(c) / static_cast<double>(total);
    entropy -= p * std::log(p);
  }
  st.perplexity = std::exp(entropy);
  return st;
}

void reset_usage(Codebook& cb) {
  std::fill(cb.usage_counts.begin(), cb.usage_counts.end(), 0);
  cb.seen_lookup = false;
}

int revive_dead_codes(Codebook& cb, const Tensor& feature_batch, int64_t threshold, uint64_t seed) {
  check_features(feature_batch, cb.D(), "revive_dead_codes");
  const int T = feature_batch.dim(0);
  if (T < 1) throw std::invalid_argument("revive_dead_codes: feature_batch is empty");
  Rng rng(seed);
  auto f = feature_batch.values();
  auto e = cb.entries.values();
  const int D = cb.D();
  int revived = 0;
  for (int k = 0; k < cb.K(); k++) {
    if (cb.usage_counts[static_cast<size_t>(k)] >= threshold) continue;
    const int t = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
    std::copy_n(f.data() + static_cast<int64_t>(t) * D, D, e.data() + static_cast<int64_t>(k) * D);
    revived++;
  }
  return revived;
}

}  // namespace tvq
