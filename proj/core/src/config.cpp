#include "tvq/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tvq/hashing.hpp"

namespace tvq {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section header at " + origin + ":" + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config: empty section name at " + origin + ":" + std::to_string(lineno));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at " + origin + ":" + std::to_string(lineno) + ": '" +
                        line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key at " + origin + ":" + std::to_string(lineno));
    cfg.kv_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

void Config::apply_override(const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos || trim(spec.substr(0, eq)).empty())
    throw ConfigError("override: expected key=value, got '" + spec + "'");
  kv_[trim(spec.substr(0, eq))] = trim(spec.substr(eq + 1));
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config: key '" + key + "' is not a bool: '" + it->second + "'");
}

std::vector<int> Config::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<int> out;
  std::istringstream is(it->second);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' has a non-integer element: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
  return out;
}

std::string Config::canonical() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t Config::hash() const { return fnv1a64(canonical()); }

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  scale.validate();
  weights.validate();
  if (corpus_n < 1) throw ConfigError("config: corpus.n must be >= 1");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
    throw ConfigError("config: corpus.eval_fraction must be in (0,1)");
  if (codebook_size < 2) throw ConfigError("config: codebook.K must be >= 2");
  for (int k : codebook_sizes)
    if (k < 2) throw ConfigError("config: sweep.codebook_sizes entries must be >= 2");
  for (int f : structure_factors) {
    ScaleConfig probe = scale;
    probe.structure_factor = f;
    try {
      probe.validate();
    } catch (const std::exception& e) {
      throw ConfigError("config: sweep.structure_factors entry " + std::to_string(f) +
                        " is invalid for this scale: " + e.what());
    }
  }
  if (batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
  if (stage1a_steps < 0 || stage1_steps < 0 || code_steps < 0 || rap_steps < 0)
    throw ConfigError("config: step budgets must be >= 0");
  if (degradation.downsample_factor != 4)
    throw ConfigError("config: degradation.factor must be 4 (x4 super-resolution)");
  if (degradation.blur_sigma_min > degradation.blur_sigma_max ||
      degradation.noise_sigma_min > degradation.noise_sigma_max)
    throw ConfigError("config: degradation ranges must satisfy min <= max");
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "[scale]\n";
  os << "hr_size = " << scale.hr_size << "\n";
  os << "texture_factor = " << scale.texture_factor << "\n";
  os << "structure_factor = " << scale.structure_factor << "\n";
  os << "xdown_factor = " << scale.xdown_factor << "\n";
  os << "texture_channels = " << scale.texture_channels << "\n";
  os << "structure_channels = " << scale.structure_channels << "\n";
  os << "[weights]\n";
  os << "lambda_adv = " << weights.lambda_adv << "\n";
  os << "lambda_commit = " << weights.lambda_commit << "\n";
  os << "lambda_align = " << weights.lambda_align << "\n";
  os << "gan_enabled = " << (weights.gan_enabled ? "true" : "false") << "\n";
  os << "[net]\n";
  os << "trunk_width = " << net.trunk_width << "\n";
  os << "trunk_cap = " << net.trunk_cap << "\n";
  os << "down_width = " << net.down_width << "\n";
  os << "vanilla_extra_res = " << net.vanilla_extra_res << "\n";
  os << "[corpus]\n";
  os << "n = " << corpus_n << "\n";
  os << "seed = " << corpus_seed << "\n";
  os << "eval_fraction = " << eval_fraction << "\n";
  os << "[degradation]\n";
  os << "blur_sigma_min = " << degradation.blur_sigma_min << "\n";
  os << "blur_sigma_max = " << degradation.blur_sigma_max << "\n";
  os << "noise_sigma_min = " << degradation.noise_sigma_min << "\n";
  os << "noise_sigma_max = " << degradation.noise_sigma_max << "\n";
  os << "seed = " << degradation.seed << "\n";
  os << "[codebook]\n";
  os << "K = " << codebook_size << "\n";
  os << "[sweep]\n";
  os << "codebook_sizes = ";
  for (size_t i = 0; i < codebook_sizes.size(); i++) os << (i ? "," : "") << codebook_sizes[i];
  os << "\n";
  os << "structure_factors = ";
  for (size_t i = 0; i < structure_factors.size(); i++) os << (i ? "," : "") << structure_factors[i];
  os << "\n";
  os << "stage1_steps = " << sweep_stage1_steps << "\n";
  os << "code_steps = " << sweep_code_steps << "\n";
  os << "[train]\n";
  os << "stage1a_steps = " << stage1a_steps << "\n";
  os << "stage1_steps = " << stage1_steps << "\n";
  os << "code_steps = " << code_steps << "\n";
  os << "rap_steps = " << rap_steps << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "stage1_lr = " << stage1_lr << "\n";
  os << "code_lr = " << code_lr << "\n";
  os << "rap_lr = " << rap_lr << "\n";
  os << "code_lambda_ce = " << code_lambda_ce << "\n";
  os << "revive_every = " << revive_every << "\n";
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  os << "out_dir = " << out_dir << "\n";
  return os.str();
}

uint64_t ExperimentConfig::hash() const { return fnv1a64(serialize()); }

ExperimentConfig resolve_experiment_config(const Config& cfg) {
  static const std::set<std::string> known = {
      "scale.hr_size",
      "scale.texture_factor",
      "scale.structure_factor",
      "scale.xdown_factor",
      "scale.texture_channels",
      "scale.structure_channels",
      "weights.lambda_adv",
      "weights.lambda_commit",
      "weights.lambda_align",
      "weights.gan_enabled",
      "net.trunk_width",
      "net.trunk_cap",
      "net.down_width",
      "net.vanilla_extra_res",
      "corpus.n",
      "corpus.seed",
      "corpus.eval_fraction",
      "degradation.blur_sigma_min",
      "degradation.blur_sigma_max",
      "degradation.noise_sigma_min",
      "degradation.noise_sigma_max",
      "degradation.seed",
      "codebook.K",
      "sweep.codebook_sizes",
      "sweep.structure_factors",
      "sweep.stage1_steps",
      "sweep.code_steps",
      "train.stage1a_steps",
      "train.stage1_steps",
      "train.code_steps",
      "train.rap_steps",
      "train.batch_size",
      "train.stage1_lr",
      "train.code_lr",
      "train.rap_lr",
      "train.code_lambda_ce",
      "train.revive_every",
      "run.seed",
      "run.out_dir",
  };
  for (const auto& [k, v] : cfg.entries())
    if (!known.count(k)) throw ConfigError("config: unknown key '" + k + "'");

  ExperimentConfig e;
  e.scale.hr_size = static_cast<int>(cfg.get_int("scale.hr_size", e.scale.hr_size));
  e.scale.texture_factor = static_cast<int>(cfg.get_int("scale.texture_factor", e.scale.texture_factor));
  e.scale.structure_factor =
      static_cast<int>(cfg.get_int("scale.structure_factor", e.scale.structure_factor));
  e.scale.xdown_factor = static_cast<int>(cfg.get_int("scale.xdown_factor", e.scale.xdown_factor));
  e.scale.texture_channels =
      static_cast<int>(cfg.get_int("scale.texture_channels", e.scale.texture_channels));
  e.scale.structure_channels =
      static_cast<int>(cfg.get_int("scale.structure_channels", e.scale.structure_channels));
  e.weights.lambda_adv = cfg.get_double("weights.lambda_adv", e.weights.lambda_adv);
  e.weights.lambda_commit = cfg.get_double("weights.lambda_commit", e.weights.lambda_commit);
  e.weights.lambda_align = cfg.get_double("weights.lambda_align", e.weights.lambda_align);
  e.weights.gan_enabled = cfg.get_bool("weights.gan_enabled", e.weights.gan_enabled);
  e.net.trunk_width = static_cast<int>(cfg.get_int("net.trunk_width", e.net.trunk_width));
  e.net.trunk_cap = static_cast<int>(cfg.get_int("net.trunk_cap", e.net.trunk_cap));
  e.net.down_width = static_cast<int>(cfg.get_int("net.down_width", e.net.down_width));
  e.net.vanilla_extra_res = static_cast<int>(cfg.get_int("net.vanilla_extra_res", e.net.vanilla_extra_res));
  e.corpus_n = static_cast<int>(cfg.get_int("corpus.n", e.corpus_n));
  e.corpus_seed = static_cast<uint64_t>(cfg.get_int("corpus.seed", static_cast<int64_t>(e.corpus_seed)));
  e.eval_fraction = cfg.get_double("corpus.eval_fraction", e.eval_fraction);
  e.degradation.blur_sigma_min = cfg.get_double("degradation.blur_sigma_min", e.degradation.blur_sigma_min);
  e.degradation.blur_sigma_max = cfg.get_double("degradation.blur_sigma_max", e.degradation.blur_sigma_max);
  e.degradation.noise_sigma_min =
      cfg.get_double("degradation.noise_sigma_min", e.degradation.noise_sigma_min);
  e.degradation.noise_sigma_max =
      cfg.get_double("degradation.noise_sigma_max", e.degradation.noise_sigma_max);
  e.degradation.seed =
      static_cast<uint64_t>(cfg.get_int("degradation.seed", static_cast<int64_t>(e.degradation.seed)));
  e.codebook_size = static_cast<int>(cfg.get_int("codebook.K", e.codebook_size));
  e.codebook_sizes = cfg.get_int_list("sweep.codebook_sizes", e.codebook_sizes);
  e.structure_factors = cfg.get_int_list("sweep.structure_factors", e.structure_factors);
  e.sweep_stage1_steps = cfg.get_int("sweep.stage1_steps", e.sweep_stage1_steps);
  e.sweep_code_steps = cfg.get_int("sweep.code_steps", e.sweep_code_steps);
  e.stage1a_steps = cfg.get_int("train.stage1a_steps", e.stage1a_steps);
  e.stage1_steps = cfg.get_int("train.stage1_steps", e.stage1_steps);
  e.code_steps = cfg.get_int("train.code_steps", e.code_steps);
  e.rap_steps = cfg.get_int("train.rap_steps", e.rap_steps);
  e.batch_size = static_cast<int>(cfg.get_int("train.batch_size", e.batch_size));
  e.stage1_lr = cfg.get_double("train.stage1_lr", e.stage1_lr);
  e.code_lr = cfg.get_double("train.code_lr", e.code_lr);
  e.rap_lr = cfg.get_double("train.rap_lr", e.rap_lr);
  e.code_lambda_ce = cfg.get_double("train.code_lambda_ce", e.code_lambda_ce);
  e.revive_every = static_cast<int>(cfg.get_int("train.revive_every", e.revive_every));
  e.seed = static_cast<uint64_t>(cfg.get_int("run.seed", static_cast<int64_t>(e.seed)));
  e.out_dir = cfg.get_str("run.out_dir", e.out_dir);

  try {
    e.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return e;
}

}  // namespace tvq
