#include "tvq/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tvq/checkpoint.hpp"

namespace tvq {

namespace {

int ilog2(int v) {
  int l = 0;
  while ((1 << l) < v) l++;
  return l;
}

void check_frozen(const TvqModel& tvq_model, const char* who) {
  for (const auto& p : tvq_model.all_params())
    if (p.value.requires_grad())
      throw std::runtime_error(std::string(who) + ": tvq_model must be frozen ('" + p.name +
                               "' still requires grad)");
}

void check_lr_input(const Tensor& Y, const ScaleConfig& sc, const char* who) {
  if (Y.rank() != 4 || Y.dim(1) != 3 || Y.dim(2) != sc.lr_size() || Y.dim(3) != sc.lr_size())
    throw std::invalid_argument(std::string(who) + ": expected (N,3," + std::to_string(sc.lr_size()) + "," +
                                std::to_string(sc.lr_size()) + "), got " + shape_str(Y.shape()));
}

}  // namespace

void PredictorNet::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out);
  stem_res.collect(prefix + ".stem_res", out);
  for (size_t i = 0; i < downs.size(); i++) {
    downs[i].collect(prefix + ".down" + std::to_string(i), out);
    down_res[i].collect(prefix + ".down_res" + std::to_string(i), out);
  }
  for (size_t i = 0; i < trunk.size(); i++) trunk[i].collect(prefix + ".trunk" + std::to_string(i), out);
  logits_head.collect(prefix + ".logits_head", out);
  if (has_structure) {
    for (size_t i = 0; i < sdowns.size(); i++) {
      sdowns[i].collect(prefix + ".sdown" + std::to_string(i), out);
      sdown_res[i].collect(prefix + ".sdown_res" + std::to_string(i), out);
    }
    struct_head.collect(prefix + ".struct_head", out);
  }
}

ParamList PredictorModel::params() const {
  ParamList out;
  net.collect("pred", out);
  return out;
}

PredictorModel make_predictor(const ScaleConfig& scale, int codebook_size, uint64_t seed,
                              ModelVariant variant, int width) {
  scale.validate();
  if (codebook_size < 2) throw std::invalid_argument("make_predictor: codebook_size must be >= 2");
  PredictorModel m;
  m.scale = scale;
  m.codebook_size = codebook_size;
  m.variant = variant;
  Rng rng(mix_seed(seed, 0x9D));

  const int w2 = 2 * width;
  const int n_down = ilog2(scale.lr_size() / scale.texture_grid());
  m.net.has_structure = variant == ModelVariant::Tvq;
  m.net.stem = Conv2dLayer(3, width, 3, 1, 1, rng);
  m.net.stem_res = ResBlock(width, rng);
  for (int l = 0; l < n_down; l++) {
    const int cin = l == 0 ? width : w2;
    m.net.downs.emplace_back(cin, w2, 4, 2, 1, rng);
    m.net.down_res.emplace_back(w2, rng);
  }
  const int trunk_w = n_down == 0 ? width : w2;
  for (int i = 0; i < 3; i++) m.net.trunk.emplace_back(trunk_w, rng);
  m.net.logits_head = Conv2dLayer(trunk_w, codebook_size, 1, 1, 0, rng);
  if (m.net.has_structure) {
    const int n_sdown = ilog2(scale.texture_grid() / scale.structure_grid());
    for (int l = 0; l < n_sdown; l++) {
      m.net.sdowns.emplace_back(trunk_w, trunk_w, 4, 2, 1, rng);
      m.net.sdown_res.emplace_back(trunk_w, rng);
    }
    m.net.struct_head = Conv2dLayer(trunk_w, scale.structure_channels, 3, 1, 1, rng);
  }
  return m;
}

PredictorOut predict(const PredictorModel& model, const Tensor& Y) {
  check_lr_input(Y, model.scale, "predict");
  Tensor h = model.net.stem_res(model.net.stem(Y));
  for (size_t l = 0; l < model.net.downs.size(); l++) {
    h = model.net.downs[l](act(h));
    h = model.net.down_res[l](h);
  }
  for (const auto& r : model.net.trunk) h = r(h);
  PredictorOut out;
  out.logits = model.net.logits_head(act(h));
  if (model.net.has_structure) {
    Tensor s = h;
    for (size_t l = 0; l < model.net.sdowns.size(); l++) {
      s = model.net.sdowns[l](act(s));
      s = model.net.sdown_res[l](s);
    }
    out.f_l_hat = model.net.struct_head(act(s));
  }
  return out;
}

TargetCodes make_targets(const TvqModel& tvq_model, const Tensor& X) {
  auto [f_h, f_l] = encode_multiscale(tvq_model, X);
  auto qr = quantize_readonly(tokens_from_nchw(f_h), tvq_model.codebook);
  TargetCodes t;
  t.indices = std::move(qr.indices);
  if (tvq_model.variant == ModelVariant::Tvq) t.f_l_target = clone_values(f_l);
  return t;
}

Tensor code_level_loss(const Tensor& logits, const Tensor& f_l_hat, const TargetCodes& targets,
                       double lambda_ce) {
  const int N = logits.dim(0), K = logits.dim(1);
  const int tokens = N * logits.dim(2) * logits.dim(3);
  if (static_cast<int>(targets.indices.size()) != tokens)
    throw std::invalid_argument("code_level_loss: " + std::to_string(targets.indices.size()) +
                                " target indices for " + std::to_string(tokens) + " tokens");

  // CE = mean_t -log softmax(logits_t)[target_t], via a one-hot mask so the
  // whole expression stays on the tape.
  Tensor logit_rows = tokens_from_nchw(logits);
  Tensor probs = softmax(logit_rows, 1);
  std::vector<scalar> onehot(static_cast<size_t>(tokens) * K, scalar(0));
  for (int t = 0; t < tokens; t++) {
    const int idx = targets.indices[static_cast<size_t>(t)];
    if (idx < 0 || idx >= K)
      throw std::invalid_argument("code_level_loss: target index " + std::to_string(idx) +
                                  " out of range for K=" + std::to_string(K));
    onehot[static_cast<size_t>(t) * K + idx] = scalar(1);
  }
  Tensor mask = make_tensor({tokens, K}, std::move(onehot));
  // tiny offset guards log(0) for extreme logits; absorbed by rounding otherwise
  Tensor ce = scalar_mul(reduce_sum(mul(mask, log_op(scalar_add(probs, 1e-300)))), -1.0 / tokens);

  if (!f_l_hat.defined() || !targets.f_l_target.defined()) return scalar_mul(ce, lambda_ce);
  Tensor reg = mse(f_l_hat, detach(targets.f_l_target));
  return add(reg, scalar_mul(ce, lambda_ce));
}

Tensor rap_image_loss(const PredictorModel& pred_model, const TvqModel& tvq_model, const Tensor& Y,
                      const Tensor& X, const LossWeights& weights, const RapOptions& opts) {
  check_frozen(tvq_model, "rap_image_loss");
  weights.validate();
  const auto& sc = pred_model.scale;
  const int N = Y.dim(0);
  const int tg = sc.texture_grid();

  PredictorOut out = predict(pred_model, Y);
  Tensor logit_rows = tokens_from_nchw(out.logits);
  Tensor onehot = one_hot_ste(logit_rows);
  Tensor fq_tokens = matmul(onehot, tvq_model.codebook.entries);
  Tensor f_h_vq = nchw_from_tokens(fq_tokens, N, tg, tg);

  Tensor x_hat;
  if (tvq_model.variant == ModelVariant::Tvq) {
    Tensor f_l = opts.grad_to_structure_head ? out.f_l_hat : detach(out.f_l_hat);
    x_hat = decode(tvq_model, f_h_vq, f_l);
  } else {
    x_hat = decode(tvq_model, f_h_vq);
  }

  Tensor rec = mse(x_hat, X);
  Tensor proxy = perceptual_proxy_loss(x_hat, X);
  Tensor loss = add(rec, proxy);
  if (opts.parts) {
    opts.parts->mse = rec.item();
    opts.parts->proxy = proxy.item();
  }
  if (weights.gan_enabled) {
    if (!opts.disc) throw std::runtime_error("rap_image_loss: gan_enabled but no discriminator given");
    auto gd = adversarial_losses(x_hat, X, *opts.disc, weights);
    if (opts.parts) opts.parts->adv_g = gd.first.item();
    loss = add(loss, scalar_mul(gd.first, weights.lambda_adv));
  }
  return loss;
}

Tensor infer_sr(const PredictorModel& pred_model, const TvqModel& tvq_model, const Tensor& Y) {
  const auto& sc = pred_model.scale;
  const int tg = sc.texture_grid();
  PredictorOut out = predict(pred_model, Y);
  Tensor logit_rows = tokens_from_nchw(out.logits);
  const int tokens = logit_rows.dim(0), K = logit_rows.dim(1);
  std::vector<int> indices(static_cast<size_t>(tokens));
  auto lv = logit_rows.values();
  for (int t = 0; t < tokens; t++) {
    const scalar* row = lv.data() + static_cast<int64_t>(t) * K;
    int best = 0;
    for (int k = 1; k < K; k++)
      if (row[k] > row[best]) best = k;
    indices[static_cast<size_t>(t)] = best;
  }
  Tensor fq_tokens = decode_indices(indices, tvq_model.codebook);
  Tensor f_h_vq = nchw_from_tokens(fq_tokens, Y.dim(0), tg, tg);
  Tensor x_hat = tvq_model.variant == ModelVariant::Tvq ? decode(tvq_model, f_h_vq, out.f_l_hat)
                                                        : decode(tvq_model, f_h_vq);
  for (auto& v : x_hat.values()) v = std::clamp(v, scalar(0), scalar(1));
  return x_hat;
}

double index_accuracy(const Tensor& logits, const std::vector<int>& target_indices) {
  const int N = logits.dim(0), K = logits.dim(1), Hg = logits.dim(2), Wg = logits.dim(3);
  const int tokens = N * Hg * Wg;
  if (static_cast<int>(target_indices.size()) != tokens)
    throw std::invalid_argument("index_accuracy: " + std::to_string(target_indices.size()) +
                                " targets for " + std::to_string(tokens) + " tokens");
  auto v = logits.values();
  int hits = 0;
  for (int n = 0; n < N; n++)
    for (int y = 0; y < Hg; y++)
      for (int x = 0; x < Wg; x++) {
        int best = 0;
        scalar bv = v[((static_cast<int64_t>(n) * K) * Hg + y) * Wg + x];
        for (int k = 1; k < K; k++) {
          const scalar val = v[((static_cast<int64_t>(n) * K + k) * Hg + y) * Wg + x];
          if (val > bv) {
            bv = val;
            best = k;
          }
        }
        if (best == target_indices[static_cast<size_t>((static_cast<int64_t>(n) * Hg + y) * Wg + x)]) hits++;
      }
  return static_cast<double>(hits) / tokens;
}

// ---------------------------------------------------------------------------
// Stage-2 training

namespace {

struct TargetCache {
  std::vector<TargetCodes> per_sample;  // batch size 1 each
};

TargetCache build_targets(const TvqModel& tvq_model, const Corpus& corpus) {
  TargetCache cache;
  cache.per_sample.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) {
    std::vector<const ImageSample*> one{&s};
    cache.per_sample.push_back(make_targets(tvq_model, stack_x(one)));
  }
  return cache;
}

TargetCodes gather_batch_targets(const TargetCache& cache, const std::vector<size_t>& ids) {
  TargetCodes t;
  const bool has_fl = cache.per_sample[ids[0]].f_l_target.defined();
  std::vector<scalar> fl;
  for (size_t id : ids) {
    const auto& src = cache.per_sample[id];
    t.indices.insert(t.indices.end(), src.indices.begin(), src.indices.end());
    if (has_fl) {
      auto v = src.f_l_target.values();
      fl.insert(fl.end(), v.begin(), v.end());
    }
  }
  if (has_fl) {
    const auto& s0 = cache.per_sample[ids[0]].f_l_target.shape();
    t.f_l_target = make_tensor({static_cast<int>(ids.size()), s0[1], s0[2], s0[3]}, std::move(fl));
  }
  return t;
}

}  // namespace

std::vector<CodeStepReport> train_code_stage(PredictorModel& pred_model, const TvqModel& tvq_model,
                                             const Corpus& corpus, const CodeStageOptions& opts) {
  check_frozen(tvq_model, "train_code_stage");
  TargetCache cache = build_targets(tvq_model, corpus);
  AdamOptimizer opt(pred_model.params(), AdamHyper{.lr = opts.lr});
  Rng rng(mix_seed(opts.seed, 0x2A));

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("train_code_stage: cannot open " + opts.csv_path);
    csv << "step,loss,mse_term,ce_term,index_accuracy\n";
    csv.precision(17);
  }

  std::vector<CodeStepReport> reports;
  reports.reserve(static_cast<size_t>(opts.iters));
  for (int64_t s = 0; s < opts.iters; s++) {
    std::vector<size_t> ids;
    std::vector<const ImageSample*> batch;
    for (int i = 0; i < opts.batch_size; i++) {
      ids.push_back(static_cast<size_t>(rng.below(corpus.samples.size())));
      batch.push_back(&corpus.samples[ids.back()]);
    }
    TargetCodes targets = gather_batch_targets(cache, ids);
    Tensor Y = stack_y(batch);

    Tape tape;
    Tape::Scope scope(tape);
    PredictorOut out = predict(pred_model, Y);
    Tensor loss = code_level_loss(out.logits, out.f_l_hat, targets, opts.lambda_ce);

    CodeStepReport rep;
    rep.step = s;
    rep.loss = loss.item();
    if (!std::isfinite(rep.loss))
      throw std::runtime_error("train_code_stage: non-finite loss at step " + std::to_string(s));
    rep.accuracy = index_accuracy(detach(out.logits), targets.indices);
    // component echoes for the CSV
    if (out.f_l_hat.defined() && targets.f_l_target.defined())
      rep.mse_term = mse(detach(out.f_l_hat), targets.f_l_target).item();
    rep.ce_term = opts.lambda_ce > 0 ? (rep.loss - rep.mse_term) / opts.lambda_ce : 0.0;

    opt.zero_grad();
    backward(loss);
    opt.step();

    if (csv.is_open())
      csv << rep.step << "," << rep.loss << "," << rep.mse_term << "," << rep.ce_term << "," << rep.accuracy
          << "\n";
    reports.push_back(rep);
  }
  if (!opts.checkpoint_path.empty()) {
    ParamList params = pred_model.params();
    save_checkpoint(opts.checkpoint_path, params);
  }
  return reports;
}

std::vector<RapStepReport> finetune_rap_stage(PredictorModel& pred_model, const TvqModel& tvq_model,
                                              const Corpus& corpus, const RapStageOptions& opts) {
  check_frozen(tvq_model, "finetune_rap_stage");
  opts.weights.validate();
  AdamOptimizer opt(pred_model.params(), AdamHyper{.lr = opts.lr});
  Rng rng(mix_seed(opts.seed, 0x2B));

  TargetCache cache;
  if (opts.code_mse_active) cache = build_targets(tvq_model, corpus);

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("finetune_rap_stage: cannot open " + opts.csv_path);
    csv << "step,image_loss,mse_loss,proxy_loss\n";
    csv.precision(17);
  }

  std::vector<RapStepReport> reports;
  reports.reserve(static_cast<size_t>(opts.iters));
  for (int64_t s = 0; s < opts.iters; s++) {
    std::vector<size_t> ids;
    std::vector<const ImageSample*> batch;
    for (int i = 0; i < opts.batch_size; i++) {
      ids.push_back(static_cast<size_t>(rng.below(corpus.samples.size())));
      batch.push_back(&corpus.samples[ids.back()]);
    }
    Tensor Y = stack_y(batch);
    Tensor X = stack_x(batch);

    Tape tape;
    Tape::Scope scope(tape);
    RapLossParts parts;
    RapOptions ro;
    ro.grad_to_structure_head = opts.grad_to_structure_head;
    ro.parts = &parts;
    Tensor loss = rap_image_loss(pred_model, tvq_model, Y, X, opts.weights, ro);
    if (opts.code_mse_active) {
      TargetCodes targets = gather_batch_targets(cache, ids);
      PredictorOut out = predict(pred_model, Y);
      if (out.f_l_hat.defined() && targets.f_l_target.defined())
        loss = add(loss, mse(out.f_l_hat, detach(targets.f_l_target)));
    }

    RapStepReport rep;
    rep.step = s;
    rep.image_loss = loss.item();
    rep.mse_loss = parts.mse;
    rep.proxy_loss = parts.proxy;
    if (!std::isfinite(rep.image_loss))
      throw std::runtime_error("finetune_rap_stage: non-finite loss at step " + std::to_string(s));

    opt.zero_grad();
    backward(loss);
    opt.step();

    if (csv.is_open()) csv << rep.step << "," << rep.image_loss << "," << rep.mse_loss << "," << rep.proxy_loss << "\n";
    reports.push_back(rep);
  }
  if (!opts.checkpoint_path.empty()) {
    ParamList params = pred_model.params();
    save_checkpoint(opts.checkpoint_path, params);
  }
  return reports;
}

}  // namespace tvq
