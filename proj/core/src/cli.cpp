#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tvq/checkpoint.hpp"
#include "tvq/experiments.hpp"
#include "tvq/hashing.hpp"
#include "tvq/image_io.hpp"

namespace tvq {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value with [sections])");
  cmd->add_option("--seed", args.seed, "override run.seed");
  cmd->add_option("--out", args.out_dir, "override run.out_dir");
  cmd->add_option("--override", args.overrides, "override a config key, e.g. codebook.K=128")
      ->take_all();
}

ExperimentConfig load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::parse_file(args.config_path);
  for (const auto& ov : args.overrides) cfg.apply_override(ov);
  if (args.seed >= 0) cfg.set("run.seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) cfg.set("run.out_dir", args.out_dir);
  return resolve_experiment_config(cfg);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& leaf) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / leaf).string();
}

int cmd_gen_corpus(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  CorpusConfig cc;
  cc.hr_size = cfg.scale.hr_size;
  cc.xdown_factor = cfg.scale.xdown_factor;
  cc.degradation = cfg.degradation;
  Corpus corpus = corpus_generate(cfg.corpus_n, cfg.corpus_seed, cc);
  const std::string path = out_path(cfg, "corpus.bin");
  corpus_save(corpus, path);
  std::vector<Tensor> preview;
  for (size_t i = 0; i < corpus.samples.size() && i < 8; i++) preview.push_back(corpus.samples[i].X);
  write_ppm(out_path(cfg, "corpus_preview.ppm"), tile_grid(preview, 4));
  std::cout << "wrote " << corpus.samples.size() << " samples to " << path << "\n";
  return 0;
}

int cmd_train_tvq(const CommonArgs& args, bool vanilla) {
  ExperimentConfig cfg = load_config(args);
  CorpusSplit split = make_corpus_split(cfg);
  auto trained = train_stage1_cached(cfg, split, vanilla ? ModelVariant::Vanilla : ModelVariant::Tvq,
                                     cfg.codebook_size, cfg.scale.structure_factor, cfg.stage1_steps);
  auto ev = eval_reconstruction(trained.model, sample_ptrs(split.eval));
  std::cout << "stage-1 " << (trained.from_cache ? "(cached) " : "") << "checkpoint: " << trained.ckpt_path
            << "\nr-PSNR " << ev.mean_psnr() << " dB, r-SSIM " << ev.mean_ssim() << "\n";
  return 0;
}

int cmd_train_predictor(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  CorpusSplit split = make_corpus_split(cfg);
  auto stage1 = train_stage1_cached(cfg, split, ModelVariant::Tvq, cfg.codebook_size,
                                    cfg.scale.structure_factor, cfg.stage1_steps);
  auto pred = train_code_cached(cfg, split, stage1, cfg.code_steps);
  auto sr = eval_sr(pred.model, stage1.model, sample_ptrs(split.eval));
  std::cout << "code-stage " << (pred.from_cache ? "(cached) " : "") << "checkpoint: " << pred.ckpt_path
            << "\nSR PSNR " << sr.mean_psnr() << " dB, SSIM " << sr.mean_ssim() << "\n";
  return 0;
}

int cmd_finetune_rap(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args);
  MetricsReport rep = run_rap_ablation(cfg);
  export_report(rep, out_path(cfg, "rap_ablation"));
  std::cout << "rap fine-tune done; report at " << out_path(cfg, "rap_ablation") << ".{csv,txt}\n";
  return 0;
}

int cmd_infer(const CommonArgs& args, const std::string& input, const std::string& output, int index) {
  ExperimentConfig cfg = load_config(args);
  CorpusSplit split = make_corpus_split(cfg);
  auto stage1 = train_stage1_cached(cfg, split, ModelVariant::Tvq, cfg.codebook_size,
                                    cfg.scale.structure_factor, cfg.stage1_steps);
  auto pred = train_code_cached(cfg, split, stage1, cfg.code_steps);

  Tensor y;
  if (!input.empty()) {
    y = read_ppm(input);
    if (y.dim(1) != cfg.scale.lr_size() || y.dim(2) != cfg.scale.lr_size())
      throw ConfigError("infer: input must be " + std::to_string(cfg.scale.lr_size()) + "x" +
                        std::to_string(cfg.scale.lr_size()) + ", got " + shape_str(y.shape()));
  } else {
    const auto& samples = split.eval.samples;
    if (index < 0 || index >= static_cast<int>(samples.size()))
      throw ConfigError("infer: --index out of range (have " + std::to_string(samples.size()) +
                        " held-out samples)");
    y = samples[static_cast<size_t>(index)].Y;
  }
  std::vector<scalar> v(y.values().begin(), y.values().end());
  Tensor batch = make_tensor({1, 3, y.dim(1), y.dim(2)}, std::move(v));
  Tensor sr = infer_sr(pred.model, stage1.model, batch);
  std::vector<scalar> out(sr.values().begin(), sr.values().end());
  write_ppm(output, make_tensor({3, sr.dim(2), sr.dim(3)}, std::move(out)));
  std::cout << "wrote " << output << "\n";
  return 0;
}

int run_report(const CommonArgs& args, const std::string& name,
               MetricsReport (*runner)(const ExperimentConfig&)) {
  ExperimentConfig cfg = load_config(args);
  MetricsReport rep = runner(cfg);
  export_report(rep, out_path(cfg, name));
  std::cout << rep.name << ": " << rep.rows.size() << " rows, " << rep.wall_clock_sec << " s; report at "
            << out_path(cfg, name) << ".{csv,txt}\n";
  for (const auto& note : rep.notes) std::cout << "  " << note << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"texture-VQ generative super-resolution workbench"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string infer_input, infer_output = "sr.ppm";
  int infer_index = 0;

  auto* gen = app.add_subcommand("gen-corpus", "generate and save the synthetic corpus");
  add_common(gen, args);
  auto* tvq = app.add_subcommand("train-tvq", "train the stage-1 tokenizer (two-branch)");
  add_common(tvq, args);
  auto* pred = app.add_subcommand("train-predictor", "train the stage-2 predictor (code-level)");
  add_common(pred, args);
  auto* rap = app.add_subcommand("finetune-rap", "image-level RAP fine-tune from the code-stage checkpoint");
  add_common(rap, args);
  auto* infer = app.add_subcommand("infer", "super-resolve an LR input with the trained pair");
  add_common(infer, args);
  infer->add_option("--input", infer_input, "LR input image (PPM)");
  infer->add_option("--output", infer_output, "output path (PPM)");
  infer->add_option("--index", infer_index, "held-out sample index when no --input is given");
  auto* sweep_k = app.add_subcommand("sweep-codebook", "codebook-size sweep, both variants");
  add_common(sweep_k, args);
  auto* ablate_tvq = app.add_subcommand("ablate-tvq", "texture-VQ vs vanilla VQ comparison");
  add_common(ablate_tvq, args);
  auto* ablate_rap = app.add_subcommand("ablate-rap", "code-level vs +image-level comparison");
  add_common(ablate_rap, args);
  auto* sweep_s = app.add_subcommand("sweep-structure", "structure-branch down-factor sweep");
  add_common(sweep_s, args);
  auto* probe = app.add_subcommand("probe-decomposition", "branch-only decoding probes");
  add_common(probe, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(args);
    if (tvq->parsed()) return cmd_train_tvq(args, false);
    if (pred->parsed()) return cmd_train_predictor(args);
    if (rap->parsed()) return cmd_finetune_rap(args);
    if (infer->parsed()) return cmd_infer(args, infer_input, infer_output, infer_index);
    if (sweep_k->parsed()) return run_report(args, "codebook_sweep", run_codebook_sweep);
    if (ablate_tvq->parsed()) return run_report(args, "tvq_vs_vq", run_tvq_vs_vq_ablation);
    if (ablate_rap->parsed()) return run_report(args, "rap_ablation", run_rap_ablation);
    if (sweep_s->parsed()) return run_report(args, "structure_factor_sweep", run_structure_factor_sweep);
    if (probe->parsed()) return run_report(args, "decomposition_probe", run_decomposition_probe);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace tvq
