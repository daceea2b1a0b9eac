#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tvq/codebook.hpp"
#include "tvq/networks.hpp"
#include "tvq/optimizer.hpp"
#include "tvq/synth.hpp"
#include "tvq/tensor.hpp"

namespace tvq {

// Spatial/channel layout of the two-branch autoencoder. All factors are
// powers of two; texture_channels doubles as the codebook dimension D.
struct ScaleConfig {
  int hr_size = 64;
  int texture_factor = 8;     // F^H is hr/texture_factor on each side
  int structure_factor = 32;  // F^L is hr/structure_factor
  int xdown_factor = 8;       // extreme-low-res anchor image factor
  int texture_channels = 32;
  int structure_channels = 8;

  int texture_grid() const { return hr_size / texture_factor; }
  int structure_grid() const { return hr_size / structure_factor; }
  int xdown_size() const { return hr_size / xdown_factor; }
  int lr_size() const { return hr_size / 4; }

  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

// Paper-scale layout kept as a named preset (not trained at desk scale).
ScaleConfig paper_scale_config();

struct LossWeights {
  double lambda_adv = 0.75;
  double lambda_commit = 0.25;
  double lambda_align = 1.0;
  bool gan_enabled = false;

  void validate() const;  // all weights >= 0
};

enum class ModelVariant { Tvq, Vanilla };

const char* variant_name(ModelVariant v);

// Width schedule knobs for the conv trunks.
struct NetHyper {
  int trunk_width = 12;
  int trunk_cap = 32;
  int down_width = 16;          // E-down / D-down width
  int vanilla_extra_res = 2;    // per-net budget compensation blocks
};

struct EncoderNet {
  Conv2dLayer stem;
  std::vector<Conv2dLayer> downs;
  std::vector<ResBlock> down_res;
  Conv2dLayer tex_head;
  std::vector<Conv2dLayer> sdowns;  // structure tail (Tvq only)
  std::vector<ResBlock> sdown_res;
  SelfAttention2d attn;  // coarsest scale
  std::vector<ResBlock> extra_res;  // vanilla compensation at token grid
  Conv2dLayer struct_head;
  bool has_structure = true;

  void collect(const std::string& prefix, ParamList& out) const;
};

struct DecoderNet {
  Conv2dLayer tex_in;
  ResBlock tex_res;
  Conv2dLayer struct_in;  // Tvq only
  SelfAttention2d attn;   // coarsest scale
  std::vector<Conv2dLayer> sups;  // structure upsample path
  std::vector<ResBlock> sup_res;
  Conv2dLayer combine;
  ResBlock comb_res;
  std::vector<ResBlock> extra_res;  // vanilla compensation
  std::vector<Conv2dLayer> ups;
  std::vector<ResBlock> up_res;
  Conv2dLayer to_rgb;
  bool has_structure = true;

  void collect(const std::string& prefix, ParamList& out) const;
};

struct DownAutoencoder {
  Conv2dLayer e_stem;
  ResBlock e_res0;
  std::vector<Conv2dLayer> e_downs;
  std::vector<ResBlock> e_res;
  Conv2dLayer e_head;
  Conv2dLayer d_in;
  ResBlock d_res0;
  std::vector<Conv2dLayer> d_ups;
  std::vector<ResBlock> d_res;
  Conv2dLayer d_out;

  void collect(const std::string& prefix, ParamList& out) const;
};

// Stage-1 trainable state: E, D, (E-down, D-down), texture codebook.
struct TvqModel {
  ScaleConfig scale;
  ModelVariant variant = ModelVariant::Tvq;
  NetHyper hyper;
  EncoderNet enc;
  DecoderNet dec;
  DownAutoencoder down;  // unused for Vanilla
  Codebook codebook;

  ParamList stage1_params() const;  // E, D, codebook entries
  ParamList down_params() const;    // E-down, D-down
  ParamList all_params() const;
};

TvqModel make_tvq_model(const ScaleConfig& scale, int codebook_size, uint64_t seed,
                        ModelVariant variant = ModelVariant::Tvq, const NetHyper& hyper = {});

// Ablation model: single-branch encoder, full feature quantized, no
// alignment and no structure path; parameter budget within 10% of the
// two-branch model.
TvqModel vanilla_vq_variant(const ScaleConfig& scale, int codebook_size, uint64_t seed,
                            const NetHyper& hyper = {});

// ---------------------------------------------------------------------------
// Forward paths (batched NCHW)

// X (N,3,H,H) -> (F_H, F_L); F_L is undefined for the vanilla variant.
std::pair<Tensor, Tensor> encode_multiscale(const TvqModel& model, const Tensor& X);
Tensor encode_downsampled(const TvqModel& model, const Tensor& X_down);
Tensor decode_downsampled(const TvqModel& model, const Tensor& F_down);
Tensor decode(const TvqModel& model, const Tensor& F_H_vq, const Tensor& F_L);
Tensor decode(const TvqModel& model, const Tensor& F_H_vq);  // vanilla only
Tensor decode_structure_only(const TvqModel& model, const Tensor& F_L);
Tensor decode_texture_only(const TvqModel& model, const Tensor& F_H_vq);

// Mean squared elementwise distance; the anchor is detached.
Tensor alignment_loss(const Tensor& F_L, const Tensor& F_down);

// Gradient-domain reconstruction proxy: MSE between horizontal+vertical
// finite-difference image gradients.
Tensor perceptual_proxy_loss(const Tensor& X_hat, const Tensor& X);

// Small patch discriminator for the optional adversarial term.
struct Discriminator {
  Conv2dLayer c0, c1, c2;
  Tensor operator()(const Tensor& x) const;
  ParamList params() const;
};

Discriminator make_discriminator(uint64_t seed, int width = 16);

// Hinge losses; requires weights.gan_enabled.
std::pair<Tensor, Tensor> adversarial_losses(const Tensor& X_hat, const Tensor& X,
                                             const Discriminator& disc, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Stage-1 training

struct LossReport {
  int64_t step = 0;
  double codebook_loss = 0, commit_loss = 0, mse_loss = 0, proxy_loss = 0, align_loss = 0;
  double adv_g = 0, adv_d = 0;
  double total = 0;
  double perplexity = 0;
  int dead_count = 0;
  bool align_unconstrained = false;  // structure branch present but lambda_align == 0
};

std::string loss_report_csv_header();
std::string loss_report_csv_row(const LossReport& r);

struct TvqTrainer {
  TvqTrainer(TvqModel& model, LossWeights weights, double lr, uint64_t seed, int revive_every = 1000);

  // One optimizer step on E, D and the codebook. Throws on NaN loss
  // components, naming the component.
  LossReport tvq_step(const std::vector<const ImageSample*>& batch);

  TvqModel& model;
  LossWeights weights;
  AdamOptimizer opt;
  std::unique_ptr<Discriminator> disc;
  std::unique_ptr<AdamOptimizer> disc_opt;
  int revive_every;
  int64_t revive_threshold = 1;
  int64_t step_count = 0;
  uint64_t seed;
};

LossReport tvq_step(TvqTrainer& trainer, const std::vector<const ImageSample*>& batch);

struct TrainOptions {
  int64_t steps = 1000;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 1;
  int revive_every = 1000;
  std::string csv_path;  // empty: no per-step CSV
};

// Stage 1a: E-down/D-down on X-down with plain MSE; freezes them afterwards.
// Returns the final-step training MSE.
double train_downsampled(TvqModel& model, const Corpus& corpus, const TrainOptions& opts);

// Stage 1b: returns the per-step reports (also streamed to opts.csv_path).
std::vector<LossReport> train_tvq_stage1(TvqModel& model, const Corpus& corpus, const LossWeights& weights,
                                         const TrainOptions& opts);

// Reconstruction path (HR in, HR out) for evaluation; values clamped to [0,1].
Tensor reconstruct(TvqModel& model, const Tensor& X);

}  // namespace tvq
