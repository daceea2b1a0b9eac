#include <benchmark/benchmark.h>

#include "tvq/codebook.hpp"
#include "tvq/metrics.hpp"
#include "tvq/rng.hpp"
#include "tvq/synth.hpp"
#include "tvq/tensor.hpp"
#include "tvq/tvq_model.hpp"

namespace {

using namespace tvq;

Tensor random_tensor(Rng& rng, Shape shape, bool rg = false) {
  std::vector<scalar> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<scalar>(rng.uniform(-1.0, 1.0));
  return make_tensor(std::move(shape), std::move(v), rg);
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor(rng, {n, n});
  Tensor b = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).values().data());
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor(rng, {8, 24, 32, 32});
  Tensor w = random_tensor(rng, {24, 24, 3, 3});
  Tensor b = random_tensor(rng, {24});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1).values().data());
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dTrainStep(benchmark::State& state) {
  Rng rng(3);
  Tensor x = random_tensor(rng, {8, 16, 32, 32});
  Tensor w = random_tensor(rng, {16, 16, 3, 3}, true);
  Tensor b = random_tensor(rng, {16}, true);
  for (auto _ : state) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = conv2d(x, w, b, 1, 1);
    backward(reduce_mean(mul(y, y)));
    w.zero_grad();
    b.zero_grad();
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_Conv2dTrainStep);

void BM_NearestLookup(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  Rng rng(4);
  Codebook cb;
  cb.entries = random_tensor(rng, {K, 32});
  cb.usage_counts.assign(static_cast<size_t>(K), 0);
  Tensor f = random_tensor(rng, {512, 32});
  for (auto _ : state) {
    auto qr = nearest_lookup(f, cb);
    benchmark::DoNotOptimize(qr.indices.data());
  }
  state.SetItemsProcessed(state.iterations() * 512ll * K);
}
BENCHMARK(BM_NearestLookup)->Arg(64)->Arg(256)->Arg(1024);

void BM_Ssim(benchmark::State& state) {
  Rng rng(5);
  Tensor a = random_tensor(rng, {3, 64, 64});
  Tensor b = random_tensor(rng, {3, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

void BM_StructureField(benchmark::State& state) {
  uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(gen_structure_field(seed++, 64).values().data());
}
BENCHMARK(BM_StructureField);

void BM_TvqEncodeDecode(benchmark::State& state) {
  ScaleConfig sc;
  TvqModel m = make_tvq_model(sc, 64, 1);
  Rng rng(6);
  Tensor x = random_tensor(rng, {4, 3, 64, 64});
  for (auto _ : state) {
    auto [fh, fl] = encode_multiscale(m, x);
    auto qr = quantize_readonly(tokens_from_nchw(fh), m.codebook);
    Tensor fq = nchw_from_tokens(qr.quantized, 4, sc.texture_grid(), sc.texture_grid());
    benchmark::DoNotOptimize(decode(m, fq, fl).values().data());
  }
}
BENCHMARK(BM_TvqEncodeDecode);

}  // namespace

BENCHMARK_MAIN();
