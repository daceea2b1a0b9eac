#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvq/tvq_model.hpp"

namespace tvq {

struct PredictorNet {
  Conv2dLayer stem;
  ResBlock stem_res;
  std::vector<Conv2dLayer> downs;  // LR resolution -> token grid
  std::vector<ResBlock> down_res;
  std::vector<ResBlock> trunk;
  Conv2dLayer logits_head;          // 1x1, K-way per token
  std::vector<Conv2dLayer> sdowns;  // token grid -> structure grid
  std::vector<ResBlock> sdown_res;
  Conv2dLayer struct_head;
  bool has_structure = true;

  void collect(const std::string& prefix, ParamList& out) const;
};

// Stage-2 trainable state: maps the LR input Y to codebook logits and the
// predicted structure features.
struct PredictorModel {
  ScaleConfig scale;
  int codebook_size = 0;
  ModelVariant variant = ModelVariant::Tvq;
  PredictorNet net;

  ParamList params() const;
};

PredictorModel make_predictor(const ScaleConfig& scale, int codebook_size, uint64_t seed,
                              ModelVariant variant = ModelVariant::Tvq, int width = 24);

struct PredictorOut {
  Tensor logits;   // (N,K,tg,tg)
  Tensor f_l_hat;  // (N,C_L,sg,sg); undefined for the vanilla variant
};

PredictorOut predict(const PredictorModel& model, const Tensor& Y);

// Code-level ground truth produced by the frozen stage-1 model.
struct TargetCodes {
  std::vector<int> indices;  // token-major (n,y,x), length N*tg*tg
  Tensor f_l_target;         // (N,C_L,sg,sg); undefined for vanilla
};

TargetCodes make_targets(const TvqModel& tvq_model, const Tensor& X);

// ||F_L - F_L_hat||^2 (elementwise MSE) + lambda_ce * cross-entropy averaged
// over token positions.
Tensor code_level_loss(const Tensor& logits, const Tensor& f_l_hat, const TargetCodes& targets,
                       double lambda_ce);

struct RapLossParts {
  double mse = 0, proxy = 0, adv_g = 0;
};

struct RapOptions {
  bool grad_to_structure_head = true;  // route image-level gradient into the F_L head
  const Discriminator* disc = nullptr;
  RapLossParts* parts = nullptr;  // component echo for logging
};

// Image-level loss through the frozen decoder via the one-hot STE. Gradients
// reach only predictor parameters; an unfrozen tvq_model is an error.
Tensor rap_image_loss(const PredictorModel& pred_model, const TvqModel& tvq_model, const Tensor& Y,
                      const Tensor& X, const LossWeights& weights, const RapOptions& opts = {});

// Hard-argmax inference path: indices -> codebook rows -> frozen decoder;
// output clamped to [0,1]. Runs without a tape.
Tensor infer_sr(const PredictorModel& pred_model, const TvqModel& tvq_model, const Tensor& Y);

// Fraction of token positions whose argmax matches the target index.
double index_accuracy(const Tensor& logits, const std::vector<int>& target_indices);

struct CodeStepReport {
  int64_t step = 0;
  double loss = 0, mse_term = 0, ce_term = 0;
  double accuracy = 0;  // on the step batch
};

struct RapStepReport {
  int64_t step = 0;
  double image_loss = 0, mse_loss = 0, proxy_loss = 0;
};

struct CodeStageOptions {
  int64_t iters = 6000;
  int batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 2;
  double lambda_ce = 0.5;
  std::string csv_path;
  std::string checkpoint_path;  // saved at the stage boundary when set
};

struct RapStageOptions {
  int64_t iters = 200;
  int batch_size = 8;
  double lr = 1e-4;
  uint64_t seed = 3;
  LossWeights weights;               // gan off by default
  bool grad_to_structure_head = true;
  bool code_mse_active = false;      // keep ||F_L - F_L_hat||^2 during RAP
  std::string csv_path;
  std::string checkpoint_path;
};

std::vector<CodeStepReport> train_code_stage(PredictorModel& pred_model, const TvqModel& tvq_model,
                                             const Corpus& corpus, const CodeStageOptions& opts);

std::vector<RapStepReport> finetune_rap_stage(PredictorModel& pred_model, const TvqModel& tvq_model,
                                              const Corpus& corpus, const RapStageOptions& opts);

}  // namespace tvq
