#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tvq/synth.hpp"
#include "tvq/tvq_model.hpp"

namespace tvq {

// Raised for malformed config files, unknown keys and invalid values.
// The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Plain-text key-value file with [section] headers; keys are addressed as
// "section.key". '#' starts a comment.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  // "section.key=value"
  void apply_override(const std::string& spec);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  // Sorted "key = value" dump; stable across equal configs.
  std::string canonical() const;
  uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Fully resolved experiment settings; validated against module invariants
// before any run and serialized verbatim into every report.
struct ExperimentConfig {
  ScaleConfig scale;
  LossWeights weights;
  NetHyper net;

  int corpus_n = 2000;
  uint64_t corpus_seed = 11;
  DegradationConfig degradation;
  double eval_fraction = 0.1;  // held-out tail of the corpus

  int codebook_size = 64;
  std::vector<int> codebook_sizes{16, 64, 256};   // sweep list
  std::vector<int> structure_factors{8, 16, 32};  // sweep list

  int64_t stage1a_steps = 600;
  int64_t stage1_steps = 1200;
  int64_t code_steps = 6000;
  int64_t rap_steps = 200;
  int64_t sweep_stage1_steps = 0;  // 0: same as stage1_steps
  int64_t sweep_code_steps = 0;    // 0: same as code_steps
  int batch_size = 8;
  double stage1_lr = 1e-3;
  double code_lr = 1e-3;
  double rap_lr = 1e-4;
  double code_lambda_ce = 0.5;
  int revive_every = 1000;

  uint64_t seed = 1;
  std::string out_dir = "out";

  void validate() const;  // throws ConfigError
  // Round-trips through Config: resolve(serialize()) == *this.
  std::string serialize() const;
  uint64_t hash() const;

  int64_t effective_sweep_stage1_steps() const { return sweep_stage1_steps ? sweep_stage1_steps : stage1_steps; }
  int64_t effective_sweep_code_steps() const { return sweep_code_steps ? sweep_code_steps : code_steps; }
};

// Applies cfg on top of defaults; unknown keys are a ConfigError naming the key.
ExperimentConfig resolve_experiment_config(const Config& cfg);

}  // namespace tvq
