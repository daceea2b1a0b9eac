#include "tvq/tvq_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tvq {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int ilog2(int v) {
  int l = 0;
  while ((1 << l) < v) l++;
  return l;
}

void check_nchw(const Tensor& t, int C, int H, const char* who) {
  if (t.rank() != 4 || t.dim(1) != C || t.dim(2) != H || t.dim(3) != H)
    throw std::invalid_argument(std::string(who) + ": expected (N," + std::to_string(C) + "," +
                                std::to_string(H) + "," + std::to_string(H) + "), got " +
                                shape_str(t.shape()));
}

int level_width(const NetHyper& h, int level) { return std::min(h.trunk_width << level, h.trunk_cap); }

}  // namespace

void ScaleConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ScaleConfig: " + m); };
  if (hr_size < 16) fail("hr_size must be >= 16, got " + std::to_string(hr_size));
  if (!is_pow2(hr_size)) fail("hr_size must be a power of two, got " + std::to_string(hr_size));
  if (!is_pow2(texture_factor) || texture_factor < 4)
    fail("texture_factor must be a power of two >= 4, got " + std::to_string(texture_factor));
  if (!is_pow2(structure_factor)) fail("structure_factor must be a power of two");
  if (texture_factor >= structure_factor)
    fail("texture branch must be finer than structure branch: texture_factor " +
         std::to_string(texture_factor) + " >= structure_factor " + std::to_string(structure_factor));
  if (structure_factor > hr_size)
    fail("structure_factor " + std::to_string(structure_factor) + " exceeds hr_size " +
         std::to_string(hr_size));
  // x-down must be strictly below the x4 LR input resolution.
  if (!is_pow2(xdown_factor) || xdown_factor < 8)
    fail("xdown_factor must be a power of two >= 8 (H_D < H_I/4), got " + std::to_string(xdown_factor));
  if (xdown_factor > structure_factor)
    fail("xdown_factor " + std::to_string(xdown_factor) + " must not exceed structure_factor " +
         std::to_string(structure_factor));
  if (hr_size % xdown_factor != 0) fail("xdown_factor must divide hr_size");
  if (texture_channels < 1 || structure_channels < 1) fail("channel counts must be >= 1");
}

ScaleConfig paper_scale_config() {
  ScaleConfig s;
  s.hr_size = 512;
  s.texture_factor = 8;
  s.structure_factor = 32;
  s.xdown_factor = 8;
  s.texture_channels = 256;
  s.structure_channels = 64;
  return s;
}

void LossWeights::validate() const {
  if (lambda_adv < 0 || lambda_commit < 0 || lambda_align < 0)
    throw std::invalid_argument("LossWeights: weights must be >= 0");
}

const char* variant_name(ModelVariant v) { return v == ModelVariant::Tvq ? "tvq" : "vanilla"; }

// ---------------------------------------------------------------------------
// Construction

void EncoderNet::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out);
  for (size_t i = 0; i < downs.size(); i++) {
    downs[i].collect(prefix + ".down" + std::to_string(i), out);
    down_res[i].collect(prefix + ".res" + std::to_string(i), out);
  }
  tex_head.collect(prefix + ".tex_head", out);
  for (size_t i = 0; i < sdowns.size(); i++) {
    sdowns[i].collect(prefix + ".sdown" + std::to_string(i), out);
    sdown_res[i].collect(prefix + ".sres" + std::to_string(i), out);
  }
  attn.collect(prefix + ".attn", out);
  for (size_t i = 0; i < extra_res.size(); i++)
    extra_res[i].collect(prefix + ".xres" + std::to_string(i), out);
  if (has_structure) struct_head.collect(prefix + ".struct_head", out);
}

void DecoderNet::collect(const std::string& prefix, ParamList& out) const {
  tex_in.collect(prefix + ".tex_in", out);
  tex_res.collect(prefix + ".tex_res", out);
  if (has_structure) struct_in.collect(prefix + ".struct_in", out);
  attn.collect(prefix + ".attn", out);
  for (size_t i = 0; i < sups.size(); i++) {
    sups[i].collect(prefix + ".sup" + std::to_string(i), out);
    sup_res[i].collect(prefix + ".sup_res" + std::to_string(i), out);
  }
  combine.collect(prefix + ".combine", out);
  comb_res.collect(prefix + ".comb_res", out);
  for (size_t i = 0; i < extra_res.size(); i++)
    extra_res[i].collect(prefix + ".xres" + std::to_string(i), out);
  for (size_t i = 0; i < ups.size(); i++) ups[i].collect(prefix + ".up" + std::to_string(i), out);
  for (size_t i = 0; i < up_res.size(); i++) up_res[i].collect(prefix + ".up_res" + std::to_string(i), out);
  to_rgb.collect(prefix + ".to_rgb", out);
}

void DownAutoencoder::collect(const std::string& prefix, ParamList& out) const {
  e_stem.collect(prefix + ".e_stem", out);
  e_res0.collect(prefix + ".e_res0", out);
  for (size_t i = 0; i < e_downs.size(); i++) {
    e_downs[i].collect(prefix + ".e_down" + std::to_string(i), out);
    e_res[i].collect(prefix + ".e_res" + std::to_string(i + 1), out);
  }
  e_head.collect(prefix + ".e_head", out);
  d_in.collect(prefix + ".d_in", out);
  d_res0.collect(prefix + ".d_res0", out);
  for (size_t i = 0; i < d_ups.size(); i++) {
    d_ups[i].collect(prefix + ".d_up" + std::to_string(i), out);
    d_res[i].collect(prefix + ".d_res" + std::to_string(i), out);
  }
  d_out.collect(prefix + ".d_out", out);
}

ParamList TvqModel::stage1_params() const {
  ParamList out;
  enc.collect("enc", out);
  dec.collect("dec", out);
  out.push_back({"codebook.entries", codebook.entries});
  return out;
}

ParamList TvqModel::down_params() const {
  ParamList out;
  if (variant == ModelVariant::Tvq) down.collect("down", out);
  return out;
}

ParamList TvqModel::all_params() const {
  ParamList out = stage1_params();
  ParamList dp = down_params();
  out.insert(out.end(), dp.begin(), dp.end());
  return out;
}

TvqModel make_tvq_model(const ScaleConfig& scale, int codebook_size, uint64_t seed, ModelVariant variant,
                        const NetHyper& hyper) {
  scale.validate();
  TvqModel m;
  m.scale = scale;
  m.variant = variant;
  m.hyper = hyper;
  Rng rng(mix_seed(seed, 0xE0C0DE));

  const int Lt = ilog2(scale.texture_factor);
  const int Ls = ilog2(scale.structure_factor / scale.texture_factor);
  const int wt = level_width(hyper, Lt);  // trunk width at the token grid
  const bool tvq = variant == ModelVariant::Tvq;

  // Encoder trunk to the texture token grid.
  m.enc.has_structure = tvq;
  m.enc.stem = Conv2dLayer(3, level_width(hyper, 0), 3, 1, 1, rng);
  for (int l = 1; l <= Lt; l++) {
    m.enc.downs.emplace_back(level_width(hyper, l - 1), level_width(hyper, l), 4, 2, 1, rng);
    m.enc.down_res.emplace_back(level_width(hyper, l), rng);
  }
  m.enc.tex_head = Conv2dLayer(wt, scale.texture_channels, 3, 1, 1, rng);
  if (tvq) {
    for (int l = 0; l < Ls; l++) {
      m.enc.sdowns.emplace_back(wt, wt, 4, 2, 1, rng);
      m.enc.sdown_res.emplace_back(wt, rng);
    }
    m.enc.attn = SelfAttention2d(wt, rng);
    m.enc.struct_head = Conv2dLayer(wt, scale.structure_channels, 3, 1, 1, rng);
  } else {
    m.enc.attn = SelfAttention2d(wt, rng);
    for (int i = 0; i < hyper.vanilla_extra_res; i++) m.enc.extra_res.emplace_back(wt, rng);
  }

  // Decoder.
  m.dec.has_structure = tvq;
  m.dec.tex_in = Conv2dLayer(scale.texture_channels, wt, 3, 1, 1, rng);
  m.dec.tex_res = ResBlock(wt, rng);
  if (tvq) {
    m.dec.struct_in = Conv2dLayer(scale.structure_channels, wt, 3, 1, 1, rng);
    m.dec.attn = SelfAttention2d(wt, rng);
    for (int l = 0; l < Ls; l++) {
      m.dec.sups.emplace_back(wt, wt, 3, 1, 1, rng);
      m.dec.sup_res.emplace_back(wt, rng);
    }
    m.dec.combine = Conv2dLayer(2 * wt, wt, 3, 1, 1, rng);
  } else {
    m.dec.attn = SelfAttention2d(wt, rng);
    m.dec.combine = Conv2dLayer(wt, wt, 3, 1, 1, rng);
    for (int i = 0; i < hyper.vanilla_extra_res; i++) m.dec.extra_res.emplace_back(wt, rng);
  }
  m.dec.comb_res = ResBlock(wt, rng);
  for (int l = Lt; l >= 1; l--) {
    m.dec.ups.emplace_back(level_width(hyper, l), level_width(hyper, l - 1), 3, 1, 1, rng);
    // residual refinement at the coarser half of the pyramid only
    if (l > Lt / 2) m.dec.up_res.emplace_back(level_width(hyper, l - 1), rng);
  }
  m.dec.to_rgb = Conv2dLayer(level_width(hyper, 0), 3, 3, 1, 1, rng, 0.5);

  // Down-sampled autoencoder (structure anchor), Tvq only.
  if (tvq) {
    const int wd = hyper.down_width;
    const int Ld = ilog2(scale.structure_factor / scale.xdown_factor);
    m.down.e_stem = Conv2dLayer(3, wd, 3, 1, 1, rng);
    m.down.e_res0 = ResBlock(wd, rng);
    for (int l = 0; l < Ld; l++) {
      m.down.e_downs.emplace_back(wd, wd, 4, 2, 1, rng);
      m.down.e_res.emplace_back(wd, rng);
    }
    m.down.e_head = Conv2dLayer(wd, scale.structure_channels, 3, 1, 1, rng);
    m.down.d_in = Conv2dLayer(scale.structure_channels, wd, 3, 1, 1, rng);
    m.down.d_res0 = ResBlock(wd, rng);
    for (int l = 0; l < Ld; l++) {
      m.down.d_ups.emplace_back(wd, wd, 3, 1, 1, rng);
      m.down.d_res.emplace_back(wd, rng);
    }
    m.down.d_out = Conv2dLayer(wd, 3, 3, 1, 1, rng, 0.5);
  }

  m.codebook = init_codebook(codebook_size, scale.texture_channels, mix_seed(seed, 0xC0DEB00C),
                             CodebookInit::UniformRandom);
  m.codebook.entries.set_requires_grad(true);
  return m;
}

TvqModel vanilla_vq_variant(const ScaleConfig& scale, int codebook_size, uint64_t seed,
                            const NetHyper& hyper) {
  return make_tvq_model(scale, codebook_size, seed, ModelVariant::Vanilla, hyper);
}

// ---------------------------------------------------------------------------
// Forward paths

std::pair<Tensor, Tensor> encode_multiscale(const TvqModel& model, const Tensor& X) {
  check_nchw(X, 3, model.scale.hr_size, "encode_multiscale");
  Tensor h = model.enc.stem(X);
  for (size_t l = 0; l < model.enc.downs.size(); l++) {
    h = model.enc.downs[l](act(h));
    h = model.enc.down_res[l](h);
  }
  Tensor trunk = h;  // token-grid features
  if (model.variant == ModelVariant::Vanilla) {
    Tensor t = model.enc.attn(trunk);
    for (const auto& r : model.enc.extra_res) t = r(t);
    return {model.enc.tex_head(act(t)), Tensor()};
  }
  Tensor f_h = model.enc.tex_head(act(trunk));
  Tensor s = trunk;
  for (size_t l = 0; l < model.enc.sdowns.size(); l++) {
    s = model.enc.sdowns[l](act(s));
    s = model.enc.sdown_res[l](s);
  }
  s = model.enc.attn(s);
  Tensor f_l = model.enc.struct_head(act(s));
  return {f_h, f_l};
}

Tensor encode_downsampled(const TvqModel& model, const Tensor& X_down) {
  if (model.variant != ModelVariant::Tvq)
    throw std::runtime_error("encode_downsampled: vanilla variant has no down-sampled autoencoder");
  check_nchw(X_down, 3, model.scale.xdown_size(), "encode_downsampled");
  Tensor h = model.down.e_res0(model.down.e_stem(X_down));
  for (size_t l = 0; l < model.down.e_downs.size(); l++) {
    h = model.down.e_downs[l](act(h));
    h = model.down.e_res[l](h);
  }
  return model.down.e_head(act(h));
}

Tensor decode_downsampled(const TvqModel& model, const Tensor& F_down) {
  if (model.variant != ModelVariant::Tvq)
    throw std::runtime_error("decode_downsampled: vanilla variant has no down-sampled autoencoder");
  check_nchw(F_down, model.scale.structure_channels, model.scale.structure_grid(), "decode_downsampled");
  Tensor h = model.down.d_res0(model.down.d_in(F_down));
  for (size_t l = 0; l < model.down.d_ups.size(); l++) {
    h = model.down.d_ups[l](act(nearest_upsample(h, 2)));
    h = model.down.d_res[l](h);
  }
  return model.down.d_out(act(h));
}

namespace {

Tensor decode_common(const TvqModel& model, const Tensor& F_H_vq, const Tensor& F_L) {
  const auto& sc = model.scale;
  check_nchw(F_H_vq, sc.texture_channels, sc.texture_grid(), "decode");

  Tensor tex = model.dec.tex_res(model.dec.tex_in(F_H_vq));
  Tensor h;
  if (model.variant == ModelVariant::Tvq) {
    check_nchw(F_L, sc.structure_channels, sc.structure_grid(), "decode");
    if (F_L.dim(0) != F_H_vq.dim(0))
      throw std::invalid_argument("decode: branch batch sizes differ: " + shape_str(F_H_vq.shape()) +
                                  " vs " + shape_str(F_L.shape()));
    Tensor s = model.dec.attn(model.dec.struct_in(F_L));
    for (size_t l = 0; l < model.dec.sups.size(); l++) {
      s = model.dec.sups[l](act(nearest_upsample(s, 2)));
      s = model.dec.sup_res[l](s);
    }
    h = model.dec.combine(act(concat({tex, s}, 1)));
  } else {
    Tensor t = model.dec.attn(tex);
    for (const auto& r : model.dec.extra_res) t = r(t);
    h = model.dec.combine(act(t));
  }
  h = model.dec.comb_res(h);
  size_t ri = 0;
  for (size_t l = 0; l < model.dec.ups.size(); l++) {
    h = model.dec.ups[l](act(nearest_upsample(h, 2)));
    if (ri < model.dec.up_res.size()) {
      h = model.dec.up_res[ri](h);
      ri++;
    }
  }
  return model.dec.to_rgb(act(h));
}

}  // namespace

Tensor decode(const TvqModel& model, const Tensor& F_H_vq, const Tensor& F_L) {
  if (model.variant == ModelVariant::Vanilla)
    throw std::invalid_argument("decode: vanilla variant accepts only the quantized branch");
  return decode_common(model, F_H_vq, F_L);
}

Tensor decode(const TvqModel& model, const Tensor& F_H_vq) {
  if (model.variant == ModelVariant::Tvq)
    throw std::invalid_argument("decode: tvq variant requires the structure branch");
  return decode_common(model, F_H_vq, Tensor());
}

Tensor decode_structure_only(const TvqModel& model, const Tensor& F_L) {
  if (model.variant != ModelVariant::Tvq)
    throw std::invalid_argument("decode_structure_only: requires the two-branch variant");
  const auto& sc = model.scale;
  Tensor zeros_tex = zeros({F_L.dim(0), sc.texture_channels, sc.texture_grid(), sc.texture_grid()});
  return decode_common(model, zeros_tex, F_L);
}

Tensor decode_texture_only(const TvqModel& model, const Tensor& F_H_vq) {
  if (model.variant != ModelVariant::Tvq)
    throw std::invalid_argument("decode_texture_only: requires the two-branch variant");
  const auto& sc = model.scale;
  Tensor zeros_struct = zeros({F_H_vq.dim(0), sc.structure_channels, sc.structure_grid(), sc.structure_grid()});
  return decode_common(model, F_H_vq, zeros_struct);
}

Tensor alignment_loss(const Tensor& F_L, const Tensor& F_down) {
  if (F_L.shape() != F_down.shape())
    throw std::invalid_argument("alignment_loss: shape mismatch " + shape_str(F_L.shape()) + " vs " +
                                shape_str(F_down.shape()));
  return mse(F_L, detach(F_down));
}

Tensor perceptual_proxy_loss(const Tensor& X_hat, const Tensor& X) {
  if (X_hat.shape() != X.shape())
    throw std::invalid_argument("perceptual_proxy_loss: shape mismatch " + shape_str(X_hat.shape()) +
                                " vs " + shape_str(X.shape()));
  const int H = X.dim(2), W = X.dim(3);
  auto gx = [&](const Tensor& t) { return sub(slice(t, 3, 1, W - 1), slice(t, 3, 0, W - 1)); };
  auto gy = [&](const Tensor& t) { return sub(slice(t, 2, 1, H - 1), slice(t, 2, 0, H - 1)); };
  return add(mse(gx(X_hat), gx(X)), mse(gy(X_hat), gy(X)));
}

// ---------------------------------------------------------------------------
// Discriminator

Tensor Discriminator::operator()(const Tensor& x) const { return c2(act(c1(act(c0(x))))); }

ParamList Discriminator::params() const {
  ParamList out;
  c0.collect("disc.c0", out);
  c1.collect("disc.c1", out);
  c2.collect("disc.c2", out);
  return out;
}

Discriminator make_discriminator(uint64_t seed, int width) {
  Rng rng(mix_seed(seed, 0xD15C));
  Discriminator d;
  d.c0 = Conv2dLayer(3, width, 4, 2, 1, rng);
  d.c1 = Conv2dLayer(width, 2 * width, 4, 2, 1, rng);
  // zero-init head: a fresh discriminator carries no information
  d.c2 = Conv2dLayer(2 * width, 1, 3, 1, 1, rng, 0.0);
  return d;
}

std::pair<Tensor, Tensor> adversarial_losses(const Tensor& X_hat, const Tensor& X,
                                             const Discriminator& disc, const LossWeights& weights) {
  if (!weights.gan_enabled)
    throw std::runtime_error("adversarial_losses: called with gan_enabled == false");
  if (X_hat.shape() != X.shape())
    throw std::invalid_argument("adversarial_losses: shape mismatch " + shape_str(X_hat.shape()) + " vs " +
                                shape_str(X.shape()));
  Tensor d_real = disc(X);
  Tensor d_fake_detached = disc(detach(X_hat));
  Tensor d_fake = disc(X_hat);
  // hinge: E relu(1 - D(x)) + E relu(1 + D(x_hat)); generator: -E D(x_hat)
  Tensor d_loss = add(reduce_mean(relu(scalar_add(scalar_mul(d_real, -1.0), 1.0))),
                      reduce_mean(relu(scalar_add(d_fake_detached, 1.0))));
  Tensor g_loss = scalar_mul(reduce_mean(d_fake), -1.0);
  return {g_loss, d_loss};
}

// ---------------------------------------------------------------------------
// Training

std::string loss_report_csv_header() {
  return "step,codebook_loss,commit_loss,mse_loss,proxy_loss,align_loss,adv_g,adv_d,total,perplexity,"
         "dead_count";
}

std::string loss_report_csv_row(const LossReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.step << "," << r.codebook_loss << "," << r.commit_loss << "," << r.mse_loss << "," << r.proxy_loss
     << "," << r.align_loss << "," << r.adv_g << "," << r.adv_d << "," << r.total << "," << r.perplexity
     << "," << r.dead_count;
  return os.str();
}

TvqTrainer::TvqTrainer(TvqModel& model_, LossWeights weights_, double lr, uint64_t seed_, int revive_every_)
    : model(model_),
      weights(weights_),
      opt(model_.stage1_params(), AdamHyper{.lr = lr}),
      revive_every(revive_every_),
      seed(seed_) {
  weights.validate();
  if (weights.gan_enabled) {
    disc = std::make_unique<Discriminator>(make_discriminator(mix_seed(seed_, 0xADD)));
    disc_opt = std::make_unique<AdamOptimizer>(disc->params(), AdamHyper{.lr = lr});
  }
}

LossReport TvqTrainer::tvq_step(const std::vector<const ImageSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("tvq_step: empty batch");
  const bool tvq = model.variant == ModelVariant::Tvq;
  if (tvq) {
    for (const auto& p : model.down_params())
      if (p.value.requires_grad())
        throw std::runtime_error("tvq_step: stage-1a parameters must be trained and frozen first ('" +
                                 p.name + "' still requires grad)");
  }

  const auto& sc = model.scale;
  const int N = static_cast<int>(batch.size());
  const int tg = sc.texture_grid();

  Tensor X = stack_x(batch);
  reset_usage(model.codebook);

  Tape tape;
  Tape::Scope scope(tape);

  auto [f_h, f_l] = encode_multiscale(model, X);
  Tensor tokens = tokens_from_nchw(f_h);
  QuantizeResult qr = nearest_lookup(tokens, model.codebook);
  auto [cb_loss, commit_loss] = vq_losses(tokens, qr, model.codebook);
  Tensor fq = nchw_from_tokens(ste_passthrough(tokens, qr.quantized), N, tg, tg);

  Tensor x_hat = tvq ? decode(model, fq, f_l) : decode(model, fq);
  Tensor rec_loss = mse(x_hat, X);
  Tensor proxy_loss = perceptual_proxy_loss(x_hat, X);

  LossReport rep;
  rep.step = step_count;

  Tensor total = add(cb_loss, scalar_mul(commit_loss, weights.lambda_commit));
  total = add(total, rec_loss);
  total = add(total, proxy_loss);
  if (tvq) {
    Tensor f_down = encode_downsampled(model, stack_xdown(batch));
    Tensor align = alignment_loss(f_l, f_down);
    rep.align_loss = align.item();
    total = add(total, scalar_mul(align, weights.lambda_align));
    rep.align_unconstrained = weights.lambda_align == 0.0;
  }
  Tensor d_loss_tensor;
  if (weights.gan_enabled) {
    auto [g_loss, d_loss] = adversarial_losses(x_hat, X, *disc, weights);
    rep.adv_g = g_loss.item();
    rep.adv_d = d_loss.item();
    total = add(total, scalar_mul(g_loss, weights.lambda_adv));
    d_loss_tensor = d_loss;
  }

  rep.codebook_loss = cb_loss.item();
  rep.commit_loss = commit_loss.item();
  rep.mse_loss = rec_loss.item();
  rep.proxy_loss = proxy_loss.item();
  rep.total = total.item();

  const struct {
    const char* name;
    double v;
  } components[] = {{"codebook_loss", rep.codebook_loss}, {"commit_loss", rep.commit_loss},
                    {"mse_loss", rep.mse_loss},           {"proxy_loss", rep.proxy_loss},
                    {"align_loss", rep.align_loss},       {"adv_g", rep.adv_g},
                    {"adv_d", rep.adv_d},                 {"total", rep.total}};
  for (const auto& c : components)
    if (!std::isfinite(c.v))
      throw std::runtime_error("tvq_step: non-finite loss component '" + std::string(c.name) + "' at step " +
                               std::to_string(step_count));

  opt.zero_grad();
  backward(total);
  opt.step();

  if (weights.gan_enabled) {
    disc_opt->zero_grad();
    backward(d_loss_tensor);
    disc_opt->step();
  }

  auto stats = usage_stats(model.codebook);
  rep.perplexity = stats.perplexity;
  rep.dead_count = stats.dead_count;

  step_count++;
  if (revive_every > 0 && step_count % revive_every == 0)
    revive_dead_codes(model.codebook, detach(tokens), revive_threshold, mix_seed(seed, static_cast<uint64_t>(step_count)));
  return rep;
}

LossReport tvq_step(TvqTrainer& trainer, const std::vector<const ImageSample*>& batch) {
  return trainer.tvq_step(batch);
}

namespace {

std::vector<const ImageSample*> draw_batch(const Corpus& corpus, Rng& rng, int batch_size) {
  std::vector<const ImageSample*> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int i = 0; i < batch_size; i++)
    batch.push_back(&corpus.samples[rng.below(corpus.samples.size())]);
  return batch;
}

}  // namespace

double train_downsampled(TvqModel& model, const Corpus& corpus, const TrainOptions& opts) {
  if (model.variant != ModelVariant::Tvq)
    throw std::runtime_error("train_downsampled: vanilla variant has no down-sampled autoencoder");
  ParamList params = model.down_params();
  set_requires_grad(params, true);
  AdamOptimizer opt(params, AdamHyper{.lr = opts.lr});
  Rng rng(mix_seed(opts.seed, 0x1A));
  double last = 0;
  for (int64_t s = 0; s < opts.steps; s++) {
    auto batch = draw_batch(corpus, rng, opts.batch_size);
    Tensor xd = stack_xdown(batch);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = mse(decode_downsampled(model, encode_downsampled(model, xd)), xd);
    last = loss.item();
    if (!std::isfinite(last))
      throw std::runtime_error("train_downsampled: non-finite loss at step " + std::to_string(s));
    opt.zero_grad();
    backward(loss);
    opt.step();
  }
  set_requires_grad(params, false);  // stage-1a frozen from here on
  return last;
}

std::vector<LossReport> train_tvq_stage1(TvqModel& model, const Corpus& corpus, const LossWeights& weights,
                                         const TrainOptions& opts) {
  TvqTrainer trainer(model, weights, opts.lr, opts.seed, opts.revive_every);
  Rng rng(mix_seed(opts.seed, 0x1B));
  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("train_tvq_stage1: cannot open " + opts.csv_path);
    csv << loss_report_csv_header() << "\n";
  }
  std::vector<LossReport> reports;
  reports.reserve(static_cast<size_t>(opts.steps));
  for (int64_t s = 0; s < opts.steps; s++) {
    auto rep = trainer.tvq_step(draw_batch(corpus, rng, opts.batch_size));
    if (csv.is_open()) csv << loss_report_csv_row(rep) << "\n";
    reports.push_back(rep);
  }
  return reports;
}

Tensor reconstruct(TvqModel& model, const Tensor& X) {
  const auto& sc = model.scale;
  auto [f_h, f_l] = encode_multiscale(model, X);
  Tensor tokens = tokens_from_nchw(f_h);
  QuantizeResult qr = quantize_readonly(tokens, model.codebook);
  Tensor fq = nchw_from_tokens(qr.quantized, X.dim(0), sc.texture_grid(), sc.texture_grid());
  Tensor x_hat = model.variant == ModelVariant::Tvq ? decode(model, fq, f_l) : decode(model, fq);
  for (auto& v : x_hat.values()) v = std::clamp(v, scalar(0), scalar(1));
  return x_hat;
}

}  // namespace tvq
