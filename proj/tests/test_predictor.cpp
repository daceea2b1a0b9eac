#include "tvq/predictor.hpp"

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oracles.hpp"
#include "tvq/rng.hpp"

using namespace tvq;

namespace {

ScaleConfig tiny16() {
  ScaleConfig s;
  s.hr_size = 16;
  s.texture_factor = 4;
  s.structure_factor = 8;
  s.xdown_factor = 8;
  s.texture_channels = 6;
  s.structure_channels = 3;
  return s;
}

NetHyper tiny_net() {
  NetHyper h;
  h.trunk_width = 6;
  h.trunk_cap = 12;
  h.down_width = 6;
  return h;
}

struct Fixture {
  TvqModel tvq;
  PredictorModel pred;
  Corpus corpus;

  Fixture()
      : tvq(make_tvq_model(tiny16(), 8, 3, ModelVariant::Tvq, tiny_net())),
        pred(make_predictor(tiny16(), 8, 4, ModelVariant::Tvq, 8)) {
    CorpusConfig cc;
    cc.hr_size = 16;
    corpus = corpus_generate(6, 12, cc);
    set_requires_grad(tvq.all_params(), false);
  }

  std::vector<const ImageSample*> batch(int n) const {
    std::vector<const ImageSample*> b;
    for (int i = 0; i < n; i++) b.push_back(&corpus.samples[static_cast<size_t>(i)]);
    return b;
  }
};

}  // namespace

TEST_CASE("predict: shape contract and determinism") {
  ScaleConfig desk;  // 64px defaults
  PredictorModel pm = make_predictor(desk, 64, 9);
  Rng rng(1);
  Tensor y = oracles::random_tensor(rng, {2, 3, 16, 16}, false, 0.0, 1.0);
  auto out = predict(pm, y);
  CHECK(out.logits.shape() == Shape{2, 64, 8, 8});
  CHECK(out.f_l_hat.shape() == Shape{2, 8, 2, 2});
  auto out2 = predict(pm, y);
  CHECK(std::memcmp(out.logits.values().data(), out2.logits.values().data(),
                    out.logits.values().size() * sizeof(scalar)) == 0);
  CHECK_THROWS_AS(predict(pm, oracles::random_tensor(rng, {1, 3, 8, 8}, false)), std::invalid_argument);
}

TEST_CASE("predict: FD gradient check on the tiny config") {
  PredictorModel pm = make_predictor(tiny16(), 8, 5, ModelVariant::Tvq, 6);
  Rng rng(2);
  Tensor y = oracles::random_tensor(rng, {1, 3, 4, 4}, true, 0.1, 0.9);
  auto loss_fn = [&] {
    auto out = predict(pm, y);
    return add(reduce_mean(mul(out.logits, out.logits)), reduce_sum(mul(out.f_l_hat, out.f_l_hat)));
  };
  auto rep = oracles::fd_check(loss_fn, {y}, 1e-5, 16);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("make_targets: deterministic, brute-force indices, pipeline identity") {
  Fixture fx;
  Tensor X = stack_x(fx.batch(2));
  auto t1 = make_targets(fx.tvq, X);
  auto t2 = make_targets(fx.tvq, X);
  CHECK(t1.indices == t2.indices);
  CHECK(std::memcmp(t1.f_l_target.values().data(), t2.f_l_target.values().data(),
                    t1.f_l_target.values().size() * sizeof(scalar)) == 0);

  auto [fh, fl] = encode_multiscale(fx.tvq, X);
  auto brute = oracles::brute_force_nearest(tokens_from_nchw(fh), fx.tvq.codebook.entries);
  CHECK(t1.indices == brute);

  // decode(C[I_H], F_L) reproduces the stage-1 reconstruction exactly
  Tensor via_targets =
      decode(fx.tvq, nchw_from_tokens(decode_indices(t1.indices, fx.tvq.codebook), 2, 4, 4), t1.f_l_target);
  Tensor via_lookup = decode(
      fx.tvq, nchw_from_tokens(quantize_readonly(tokens_from_nchw(fh), fx.tvq.codebook).quantized, 2, 4, 4),
      fl);
  CHECK(std::memcmp(via_targets.values().data(), via_lookup.values().data(),
                    via_targets.values().size() * sizeof(scalar)) == 0);
}

TEST_CASE("code_level_loss: limit case, uniform logits, lambda off") {
  Fixture fx;
  Tensor X = stack_x(fx.batch(1));
  auto targets = make_targets(fx.tvq, X);
  const int tg = fx.tvq.scale.texture_grid();
  const int K = 8;

  // logits massively favoring the true index, exact F_L -> loss ~ 0
  std::vector<scalar> sharp(static_cast<size_t>(K) * tg * tg, 0);
  for (int y = 0; y < tg; y++)
    for (int x = 0; x < tg; x++) {
      const int idx = targets.indices[static_cast<size_t>(y) * tg + x];
      sharp[(static_cast<size_t>(idx) * tg + y) * tg + x] = 60.0;
    }
  Tensor sharp_logits = make_tensor({1, K, tg, tg}, std::move(sharp));
  Tensor exact_fl = clone_values(targets.f_l_target);
  CHECK(code_level_loss(sharp_logits, exact_fl, targets, 0.5).item() < 1e-12);

  // uniform logits: CE = ln K per token
  Tensor uniform = zeros({1, K, tg, tg});
  const double loss_ce_only = code_level_loss(uniform, exact_fl, targets, 1.0).item();
  CHECK(loss_ce_only == doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-9));
  // desk-scale anchor: K=64 would give ln 64 = 4.158883
  CHECK(std::log(64.0) == doctest::Approx(4.158883).epsilon(1e-6));

  // lambda_ce = 0 reduces to pure MSE on F_L_hat
  Rng rng(3);
  Tensor fl_off = make_tensor(exact_fl.shape(), [&] {
    std::vector<scalar> v(exact_fl.values().begin(), exact_fl.values().end());
    for (auto& x : v) x += 0.5;
    return v;
  }());
  CHECK(code_level_loss(uniform, fl_off, targets, 0.0).item() == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("index_accuracy: perfect and random baselines") {
  std::vector<int> targets{0, 1, 2, 3};
  std::vector<scalar> v(static_cast<size_t>(4) * 4, 0);  // (1,4,2,2) logits
  // token order is (y,x) row-major; channel k plane holds logit of class k
  for (int t = 0; t < 4; t++) v[static_cast<size_t>(targets[static_cast<size_t>(t)]) * 4 + t] = 5.0;
  Tensor logits = make_tensor({1, 4, 2, 2}, std::move(v));
  CHECK(index_accuracy(logits, targets) == doctest::Approx(1.0));

  // K=64 random logits -> accuracy ~ 1/64 in expectation
  Rng rng(7);
  const int K = 64, tokens = 4096;
  int hits_total = 0, n_total = 0;
  for (int rep = 0; rep < 4; rep++) {
    std::vector<scalar> lv(static_cast<size_t>(K) * tokens);
    for (auto& x : lv) x = static_cast<scalar>(rng.uniform(-1, 1));
    std::vector<int> tv(static_cast<size_t>(tokens));
    for (auto& t : tv) t = static_cast<int>(rng.below(K));
    Tensor l = make_tensor({1, K, 64, 64}, std::move(lv));
    hits_total += static_cast<int>(index_accuracy(l, tv) * tokens + 0.5);
    n_total += tokens;
  }
  const double acc = static_cast<double>(hits_total) / n_total;
  CHECK(std::abs(acc - 1.0 / 64) < 0.004);
}

TEST_CASE("rap_image_loss: frozen contract and gradient routing") {
  Fixture fx;
  auto batch = fx.batch(2);
  Tensor Y = stack_y(batch);
  Tensor X = stack_x(batch);
  LossWeights w;

  SUBCASE("unfrozen tvq model is rejected") {
    set_requires_grad(fx.tvq.all_params(), true);
    CHECK_THROWS_AS(rap_image_loss(fx.pred, fx.tvq, Y, X, w), std::runtime_error);
  }

  SUBCASE("gradients reach the predictor only") {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = rap_image_loss(fx.pred, fx.tvq, Y, X, w);
    backward(loss);
    for (const auto& p : fx.tvq.all_params()) CHECK_FALSE(p.value.has_grad());
    bool any = false;
    for (const auto& p : fx.pred.params())
      if (p.value.has_grad())
        for (auto g : p.value.grad_view())
          if (g != 0) any = true;
    CHECK(any);
  }

  SUBCASE("structure-head routing flag detaches the F_L path") {
    RapOptions ro;
    ro.grad_to_structure_head = false;
    Tape tape;
    Tape::Scope scope(tape);
    backward(rap_image_loss(fx.pred, fx.tvq, Y, X, w, ro));
    // the struct head receives no gradient when detached
    for (const auto& p : fx.pred.params()) {
      if (p.name.find("struct_head") == std::string::npos) continue;
      bool nonzero = false;
      if (p.value.has_grad())
        for (auto g : p.value.grad_view())
          if (g != 0) nonzero = true;
      CHECK_FALSE(nonzero);
    }
  }
}

TEST_CASE("rap_image_loss: STE gradient equals the soft-path pullback, 0 ULP") {
  Fixture fx;
  auto batch = fx.batch(1);
  Tensor Y = stack_y(batch);
  Tensor X = stack_x(batch);
  LossWeights w;
  const int tg = fx.tvq.scale.texture_grid();

  // route A: full rap loss; capture the logits gradient
  std::vector<scalar> grad_a;
  Tensor logits_probe;
  {
    Tape tape;
    Tape::Scope scope(tape);
    auto out = predict(fx.pred, Y);
    logits_probe = out.logits;
    Tensor rows = tokens_from_nchw(out.logits);
    Tensor fq = nchw_from_tokens(matmul(one_hot_ste(rows), fx.tvq.codebook.entries), 1, tg, tg);
    Tensor x_hat = decode(fx.tvq, fq, out.f_l_hat);
    backward(add(mse(x_hat, X), perceptual_proxy_loss(x_hat, X)));
    grad_a.assign(logits_probe.grad().begin(), logits_probe.grad().end());
  }

  // route B: upstream at the exact one-hot, pulled back through softmax
  std::vector<scalar> grad_b;
  {
    auto out = predict(fx.pred, Y);
    Tensor rows = tokens_from_nchw(detach(out.logits));
    Tensor onehot_vals = one_hot_ste(rows);
    Tensor leaf = make_tensor(onehot_vals.shape(),
                              std::vector<scalar>(onehot_vals.values().begin(), onehot_vals.values().end()),
                              true);
    std::vector<scalar> upstream;
    {
      Tape tape;
      Tape::Scope scope(tape);
      Tensor fl = detach(out.f_l_hat);
      Tensor fq = nchw_from_tokens(matmul(leaf, fx.tvq.codebook.entries), 1, tg, tg);
      Tensor x_hat = decode(fx.tvq, fq, fl);
      backward(add(mse(x_hat, X), perceptual_proxy_loss(x_hat, X)));
      upstream.assign(leaf.grad().begin(), leaf.grad().end());
    }
    Tape tape;
    Tape::Scope scope(tape);
    auto out2 = predict(fx.pred, Y);
    Tensor rows2 = tokens_from_nchw(out2.logits);
    Tensor probs = softmax(rows2, 1);
    backward(reduce_sum(mul(probs, make_tensor(probs.shape(), upstream))));
    Tensor rows_grad_owner = out2.logits;
    grad_b.assign(rows_grad_owner.grad().begin(), rows_grad_owner.grad().end());
  }
  REQUIRE(grad_a.size() == grad_b.size());
  CHECK(std::memcmp(grad_a.data(), grad_b.data(), grad_a.size() * sizeof(scalar)) == 0);
}

TEST_CASE("rap pipeline identity: correct one-hots reproduce the stage-1 loss") {
  Fixture fx;
  auto batch = fx.batch(2);
  Tensor X = stack_x(batch);
  auto targets = make_targets(fx.tvq, X);
  const int tg = fx.tvq.scale.texture_grid();

  Tensor fq = nchw_from_tokens(decode_indices(targets.indices, fx.tvq.codebook), 2, tg, tg);
  Tensor x_hat = decode(fx.tvq, fq, targets.f_l_target);
  const double rap_like = add(mse(x_hat, X), perceptual_proxy_loss(x_hat, X)).item();

  auto [fh, fl] = encode_multiscale(fx.tvq, X);
  Tensor fq2 = nchw_from_tokens(quantize_readonly(tokens_from_nchw(fh), fx.tvq.codebook).quantized, 2, tg, tg);
  Tensor x_hat2 = decode(fx.tvq, fq2, fl);
  const double stage1 = add(mse(x_hat2, X), perceptual_proxy_loss(x_hat2, X)).item();
  CHECK(rap_like == doctest::Approx(stage1).epsilon(1e-15));
}

TEST_CASE("infer_sr: range, determinism, equality with the STE forward") {
  Fixture fx;
  auto batch = fx.batch(2);
  Tensor Y = stack_y(batch);
  Tensor sr = infer_sr(fx.pred, fx.tvq, Y);
  CHECK(sr.shape() == Shape{2, 3, 16, 16});
  for (auto v : sr.values()) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
  Tensor sr2 = infer_sr(fx.pred, fx.tvq, Y);
  CHECK(std::memcmp(sr.values().data(), sr2.values().data(), sr.values().size() * sizeof(scalar)) == 0);

  // eval-mode path identity with the rap forward reconstruction
  const int tg = fx.tvq.scale.texture_grid();
  auto out = predict(fx.pred, Y);
  Tensor rows = tokens_from_nchw(out.logits);
  Tensor fq = nchw_from_tokens(matmul(one_hot_ste(rows), fx.tvq.codebook.entries), 2, tg, tg);
  Tensor x_hat = decode(fx.tvq, fq, out.f_l_hat);
  auto xh = x_hat.values();
  auto srv = sr.values();
  for (size_t i = 0; i < xh.size(); i++)
    CHECK(srv[i] == std::clamp(xh[i], scalar(0), scalar(1)));
}

TEST_CASE("stage training: zero-iteration fine-tune keeps the checkpoint") {
  Fixture fx;
  std::vector<scalar> before;
  for (const auto& p : fx.pred.params())
    before.insert(before.end(), p.value.values().begin(), p.value.values().end());
  RapStageOptions opts;
  opts.iters = 0;
  auto reports = finetune_rap_stage(fx.pred, fx.tvq, fx.corpus, opts);
  CHECK(reports.empty());
  std::vector<scalar> after;
  for (const auto& p : fx.pred.params())
    after.insert(after.end(), p.value.values().begin(), p.value.values().end());
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(scalar)) == 0);
}

TEST_CASE("frozen-decoder contract: RAP steps leave every tvq parameter bit-identical") {
  Fixture fx;
  std::vector<scalar> before;
  for (const auto& p : fx.tvq.all_params())
    before.insert(before.end(), p.value.values().begin(), p.value.values().end());

  RapStageOptions opts;
  opts.iters = 3;
  opts.batch_size = 2;
  finetune_rap_stage(fx.pred, fx.tvq, fx.corpus, opts);

  std::vector<scalar> after;
  for (const auto& p : fx.tvq.all_params())
    after.insert(after.end(), p.value.values().begin(), p.value.values().end());
  REQUIRE(before.size() == after.size());
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(scalar)) == 0);
}

TEST_CASE("code stage improves index accuracy above the 1/K baseline") {
  Fixture fx;
  CodeStageOptions opts;
  opts.iters = 60;
  opts.batch_size = 3;
  opts.lr = 2e-3;
  auto reports = train_code_stage(fx.pred, fx.tvq, fx.corpus, opts);
  REQUIRE(reports.size() == 60);
  double early = 0, late = 0;
  for (int i = 0; i < 10; i++) early += reports[static_cast<size_t>(i)].accuracy;
  for (int i = 50; i < 60; i++) late += reports[static_cast<size_t>(i)].accuracy;
  CHECK(late / 10.0 > early / 10.0);
  CHECK(late / 10.0 > 1.0 / 8);  // clears the random baseline
}
