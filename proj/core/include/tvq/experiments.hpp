#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tvq/config.hpp"
#include "tvq/predictor.hpp"
#include "tvq/tvq_model.hpp"

namespace tvq {

// Tabular result with provenance. Wall clock lives in the text summary only;
// CSV cells are bit-stable across reruns of the same config.
struct MetricsReport {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> rows;
  std::string config_text;  // resolved config, verbatim
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, std::string>> provenance;  // checkpoint hashes etc
  std::vector<std::string> notes;
  double wall_clock_sec = 0;

  double cell(const std::string& row_label, const std::string& column) const;
};

// Writes base_path + ".csv" and base_path + ".txt".
void export_report(const MetricsReport& report, const std::string& base_path);

struct EvalSummary {
  std::vector<double> per_image_psnr;
  std::vector<double> per_image_ssim;
  double mean_psnr() const;
  double mean_ssim() const;
};

EvalSummary eval_reconstruction(TvqModel& model, const std::vector<const ImageSample*>& images);
EvalSummary eval_sr(const PredictorModel& pred, const TvqModel& tvq, const std::vector<const ImageSample*>& images);
// Mean per-image (mse + perceptual proxy) through the RAP forward path.
double eval_rap_loss(const PredictorModel& pred, const TvqModel& tvq,
                     const std::vector<const ImageSample*>& images);

// Train/eval split views over a generated corpus (tail fraction held out).
struct CorpusSplit {
  Corpus train;
  Corpus eval;
  uint64_t signature = 0;  // content hash over HR buffers
};
CorpusSplit make_corpus_split(const ExperimentConfig& cfg);

std::vector<const ImageSample*> sample_ptrs(const Corpus& corpus);

// Disk-cached trained stage-1 model; reruns with an identical cell key load
// the checkpoint instead of retraining (restartability without drift).
struct TrainedStage1 {
  TvqModel model;
  std::string ckpt_path;
  uint64_t ckpt_hash = 0;
  double final_perplexity = 0;
  int final_dead_count = 0;
  bool from_cache = false;
};

TrainedStage1 train_stage1_cached(const ExperimentConfig& cfg, const CorpusSplit& split,
                                  ModelVariant variant, int codebook_size, int structure_factor,
                                  int64_t stage1_steps);

struct TrainedPredictor {
  PredictorModel model;
  std::string ckpt_path;
  uint64_t ckpt_hash = 0;
  double final_train_accuracy = 0;
  bool from_cache = false;
};

TrainedPredictor train_code_cached(const ExperimentConfig& cfg, const CorpusSplit& split,
                                   const TrainedStage1& stage1, int64_t code_steps);

// Experiment runners (the paper-style ablation structure at desk scale).
MetricsReport run_codebook_sweep(const ExperimentConfig& cfg);
MetricsReport run_tvq_vs_vq_ablation(const ExperimentConfig& cfg);
MetricsReport run_rap_ablation(const ExperimentConfig& cfg);
MetricsReport run_structure_factor_sweep(const ExperimentConfig& cfg);
MetricsReport run_decomposition_probe(const ExperimentConfig& cfg);

// CLI dispatch; returns the process exit code (0 ok, 1 config, 2 runtime).
int run_cli(int argc, const char* const* argv);

}  // namespace tvq
