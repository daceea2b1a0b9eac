// Acceptance suite: one line per criterion, exit 0 iff all pass.
//
// Criteria 1-3 and 9 are property checks (fast). Criteria 4-8 train the desk
// models (H=64, K=64, 2000-image corpus) and share checkpoints through the
// on-disk cache, so a warm rerun is quick. TVQSR_ACCEPT_FAST=1 shrinks the
// training budgets to smoke-test the harness itself; the official run uses
// the defaults.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "tvq/checkpoint.hpp"
#include "tvq/codebook.hpp"
#include "tvq/experiments.hpp"
#include "tvq/hashing.hpp"
#include "tvq/metrics.hpp"
#include "tvq/rng.hpp"

using namespace tvq;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) g_failures++;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

bool fast_mode() {
  const char* env = std::getenv("TVQSR_ACCEPT_FAST");
  return env && std::string(env) == "1";
}

// ---------------------------------------------------------------------------
// Criterion 1: autodiff soundness over randomized graphs, every
// differentiable primitive, FD tolerance 1e-4 at eps 1e-5.

struct GraphCase {
  std::string name;
  std::function<Tensor()> loss;
  std::vector<Tensor> inputs;
};

std::vector<GraphCase> make_graph_cases(Rng& rng, int round) {
  std::vector<GraphCase> cases;
  auto t = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return oracles::random_tensor(rng, std::move(s), true, lo, hi);
  };
  const int b = 1 + static_cast<int>(rng.below(2));
  const int c = 2 + static_cast<int>(rng.below(3));
  const int hw = 4 + 2 * static_cast<int>(rng.below(3));

  {
    Tensor a = t({c, hw}), bb = t({c, hw});
    cases.push_back({"add_sub_mul",
                     [=] { return reduce_mean(mul(add(a, bb), sub(mul(a, bb), a))); },
                     {a, bb}});
  }
  {
    Tensor a = t({3, 4}), bb = t({4, 5});
    cases.push_back({"matmul_scalar",
                     [=] { return reduce_sum(mul(scalar_add(matmul(a, bb), 0.1), scalar_mul(matmul(a, bb), 0.5))); },
                     {a, bb}});
  }
  {
    Tensor a = t({2, 3, 4}), bb = t({2, 4, 3});
    cases.push_back({"bmm_transpose",
                     [=] {
                       Tensor y = bmm(a, bb);
                       return reduce_mean(mul(y, transpose_last2(transpose_last2(y))));
                     },
                     {a, bb}});
  }
  {
    Tensor x = t({b, c, hw, hw}), w = t({4, c, 3, 3}, -0.5, 0.5), bias = t({4}, -0.1, 0.1);
    cases.push_back({"conv_relu",
                     [=] {
                       Tensor y = relu(scalar_add(conv2d(x, w, bias, 1, 1), 0.05));
                       return reduce_mean(mul(y, y));
                     },
                     {x, w, bias}});
  }
  {
    Tensor x = t({b, c, hw, hw}), w = t({3, c, 4, 4}, -0.5, 0.5);
    cases.push_back({"strided_conv_sigmoid",
                     [=] {
                       Tensor y = sigmoid(conv2d(x, w, 2, 1));
                       return reduce_sum(mul(y, y));
                     },
                     {x, w}});
  }
  {
    Tensor x = t({b, 3, hw, hw}), w = t({3, 2, 4, 4}, -0.5, 0.5), bias = t({2}, -0.1, 0.1);
    cases.push_back({"tconv_leaky",
                     [=] {
                       Tensor y = leaky_relu(transposed_conv2d(x, w, bias, 2, 1), 0.2);
                       return reduce_mean(mul(y, y));
                     },
                     {x, w, bias}});
  }
  {
    Tensor x = t({b, c, hw, hw});
    cases.push_back({"resample_pair",
                     [=] {
                       Tensor y = avg_downsample(nearest_upsample(x, 2), 2);
                       return reduce_mean(mul(y, x));
                     },
                     {x}});
  }
  {
    Tensor x = t({3, 6});
    cases.push_back({"softmax_log",
                     [=] {
                       Tensor p = softmax(x, 1);
                       return scalar_mul(reduce_sum(mul(p, log_op(scalar_add(p, 1e-300)))), -1.0);
                     },
                     {x}});
  }
  {
    Tensor x = t({b, c, hw, hw});
    cases.push_back({"reshape_permute_slice_concat",
                     [=] {
                       Tensor y = nchw_to_nhwc(x);
                       Tensor z = nhwc_to_nchw(y);
                       Tensor s1 = slice(z, 1, 0, c - 1);
                       Tensor s2 = slice(z, 1, c - 1, 1);
                       Tensor cc = concat({s1, s2}, 1);
                       Tensor flat = reshape(cc, {b * c * hw * hw});
                       return reduce_mean(mul(flat, flat));
                     },
                     {x}});
  }
  {
    Tensor table = t({6, 4});
    std::vector<int> idx;
    for (int i = 0; i < 5; i++) idx.push_back(static_cast<int>(rng.below(6)));
    cases.push_back({"gather_rows",
                     [=] {
                       Tensor g = gather_rows(table, idx);
                       return reduce_sum(mul(g, g));
                     },
                     {table}});
  }
  {
    Tensor x = t({hw, c});
    cases.push_back({"mean_of_square", [=] { return reduce_mean(mul(x, x)); }, {x}});
  }
  (void)round;
  return cases;
}

void criterion1() {
  Rng rng(0xACC1);
  int graphs = 0;
  double worst = 0;
  std::string worst_name;
  for (int round = 0; round < 10; round++) {
    for (auto& gc : make_graph_cases(rng, round)) {
      auto rep = oracles::fd_check(gc.loss, gc.inputs, 1e-5, 6);
      graphs++;
      if (rep.max_rel_err > worst) {
        worst = rep.max_rel_err;
        worst_name = gc.name;
      }
    }
  }
  const bool pass = graphs >= 100 && worst <= 1e-4;
  report(1, pass, "autodiff gradients match central finite differences",
         std::to_string(graphs) + " graphs, max rel err " + fmt(worst, 8) + " in " + worst_name +
             "; STE ops are covered by criterion 2");
}

// ---------------------------------------------------------------------------
// Criterion 2: STE exactness (forward hard, backward equals soft-path, 0 ULP).

void criterion2() {
  Rng rng(0xACC2);
  bool pass = true;
  std::string why;

  for (int trial = 0; trial < 60 && pass; trial++) {
    const int K = 3 + static_cast<int>(rng.below(8));
    const int D = 2 + static_cast<int>(rng.below(6));
    const int T = 1 + static_cast<int>(rng.below(12));
    Tensor w = oracles::random_tensor(rng, {D, D}, false);
    auto downstream = [&](const Tensor& in) {
      Tensor h = sigmoid(matmul(in, w));
      return reduce_mean(mul(h, h));
    };

    // vq_ste_passthrough
    {
      Codebook cb;
      cb.entries = oracles::random_tensor(rng, {K, D}, false);
      cb.usage_counts.assign(static_cast<size_t>(K), 0);
      Tensor f = oracles::random_tensor(rng, {T, D}, true);
      auto qr = quantize_readonly(detach(f), cb);
      std::vector<scalar> grad_a;
      {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor out = vq_ste_passthrough(f, cb);
        if (std::memcmp(out.values().data(), qr.quantized.values().data(),
                        out.values().size() * sizeof(scalar)) != 0) {
          pass = false;
          why = "vq_ste forward differs from hard quantization";
          break;
        }
        backward(downstream(out));
        grad_a.assign(f.grad().begin(), f.grad().end());
        f.zero_grad();
      }
      Tensor leaf = make_tensor(qr.quantized.shape(),
                                std::vector<scalar>(qr.quantized.values().begin(), qr.quantized.values().end()),
                                true);
      std::vector<scalar> grad_b;
      {
        Tape tape;
        Tape::Scope scope(tape);
        backward(downstream(leaf));
        grad_b.assign(leaf.grad().begin(), leaf.grad().end());
      }
      if (std::memcmp(grad_a.data(), grad_b.data(), grad_a.size() * sizeof(scalar)) != 0) {
        pass = false;
        why = "vq_ste backward differs from the identity-path oracle";
        break;
      }
    }

    // one_hot_ste
    {
      Tensor wk = oracles::random_tensor(rng, {K, D}, false);
      auto down_k = [&](const Tensor& in) {
        Tensor h = sigmoid(matmul(in, wk));
        return reduce_mean(mul(h, h));
      };
      Tensor logits = oracles::random_tensor(rng, {T, K}, true, -3.0, 3.0);
      // exact argmax forward
      Tensor oh_plain = one_hot_ste(detach(logits));
      auto lv = logits.values();
      auto ov = oh_plain.values();
      for (int t = 0; t < T; t++) {
        int best = 0;
        for (int k = 1; k < K; k++)
          if (lv[static_cast<size_t>(t) * K + k] > lv[static_cast<size_t>(t) * K + best]) best = k;
        for (int k = 0; k < K; k++) {
          const scalar want = k == best ? scalar(1) : scalar(0);
          if (ov[static_cast<size_t>(t) * K + k] != want) {
            pass = false;
            why = "one_hot_ste forward is not the exact argmax one-hot";
          }
        }
      }
      if (!pass) break;

      std::vector<scalar> grad_a;
      {
        Tape tape;
        Tape::Scope scope(tape);
        backward(down_k(one_hot_ste(logits)));
        grad_a.assign(logits.grad().begin(), logits.grad().end());
        logits.zero_grad();
      }
      Tensor leaf = make_tensor(oh_plain.shape(),
                                std::vector<scalar>(oh_plain.values().begin(), oh_plain.values().end()), true);
      std::vector<scalar> upstream;
      {
        Tape tape;
        Tape::Scope scope(tape);
        backward(down_k(leaf));
        upstream.assign(leaf.grad().begin(), leaf.grad().end());
      }
      std::vector<scalar> grad_b;
      {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor probs = softmax(logits, 1);
        backward(reduce_sum(mul(probs, make_tensor(probs.shape(), upstream))));
        grad_b.assign(logits.grad().begin(), logits.grad().end());
        logits.zero_grad();
      }
      if (std::memcmp(grad_a.data(), grad_b.data(), grad_a.size() * sizeof(scalar)) != 0) {
        pass = false;
        why = "one_hot_ste backward differs from the soft-path oracle";
        break;
      }
    }
  }
  report(2, pass, "STE forward values hard, backward gradients equal soft-path oracles to 0 ULP",
         pass ? "60 randomized trials" : why);
}

// ---------------------------------------------------------------------------
// Criterion 3: nearest-lookup equivalence with brute force, ties included.

void criterion3() {
  Rng rng(0xACC3);
  int instances = 0, mismatches = 0;
  while (instances < 10000) {
    const int K = 2 + static_cast<int>(rng.below(48));
    const int D = 1 + static_cast<int>(rng.below(10));
    const int T = 1 + static_cast<int>(rng.below(24));
    Codebook cb;
    cb.entries = oracles::random_tensor(rng, {K, D}, false);
    cb.usage_counts.assign(static_cast<size_t>(K), 0);
    // duplicate an entry to force exact ties
    if (K >= 2 && rng.below(2) == 0) {
      auto e = cb.entries.values();
      std::copy_n(e.data(), D, e.data() + static_cast<int64_t>(K - 1) * D);
    }
    Tensor f = oracles::random_tensor(rng, {T, D}, false);
    // plant some tokens exactly on entries (distance-zero ties with the duplicate)
    auto fv = f.values();
    auto ev = cb.entries.values();
    for (int t = 0; t < T; t += 3)
      std::copy_n(ev.data() + static_cast<int64_t>(rng.below(static_cast<uint64_t>(K))) * D, D,
                  fv.data() + static_cast<int64_t>(t) * D);
    auto qr = nearest_lookup(f, cb);
    auto brute = oracles::brute_force_nearest(f, cb.entries);
    for (int t = 0; t < T; t++)
      if (qr.indices[static_cast<size_t>(t)] != brute[static_cast<size_t>(t)]) mismatches++;
    instances += T;
  }
  report(3, mismatches == 0, "nearest_lookup agrees with the brute-force scan",
         std::to_string(instances) + " instances incl. exact ties, " + std::to_string(mismatches) +
             " mismatches");
}

// ---------------------------------------------------------------------------
// Criteria 4-8: desk-scale training runs.

ExperimentConfig acceptance_config() {
  Config cfg;
  const bool fast = fast_mode();
  cfg.set("corpus.n", fast ? "60" : "2000");
  cfg.set("codebook.K", "64");
  cfg.set("sweep.codebook_sizes", "16,64");
  cfg.set("sweep.structure_factors", "8,16,32");
  cfg.set("train.stage1a_steps", fast ? "40" : "600");
  cfg.set("train.stage1_steps", fast ? "60" : "1500");
  cfg.set("train.code_steps", fast ? "60" : "6000");
  cfg.set("train.rap_steps", fast ? "10" : "200");
  cfg.set("sweep.code_steps", fast ? "60" : "2000");
  const char* out = std::getenv("TVQSR_ACCEPT_OUT");
  cfg.set("run.out_dir", out ? out : "acceptance_out");
  return resolve_experiment_config(cfg);
}

void criterion4_5(const ExperimentConfig& cfg) {
  MetricsReport ab = run_tvq_vs_vq_ablation(cfg);
  export_report(ab, cfg.out_dir + "/tvq_vs_vq");
  const double r_tvq = ab.cell("tvq", "r_psnr");
  const double r_vq = ab.cell("vanilla", "r_psnr");
  const double sr_tvq = ab.cell("tvq", "sr_psnr");
  const double sr_vq = ab.cell("vanilla", "sr_psnr");
  const bool pass4 = (r_tvq - r_vq >= 0.5) && (sr_tvq > sr_vq);
  report(4, pass4, "texture VQ beats vanilla VQ at K=64",
         "r-PSNR " + fmt(r_tvq) + " vs " + fmt(r_vq) + " dB (margin " + fmt(r_tvq - r_vq) +
             ", need >= 0.5); SR PSNR " + fmt(sr_tvq) + " vs " + fmt(sr_vq));

  MetricsReport sweep = run_codebook_sweep(cfg);
  export_report(sweep, cfg.out_dir + "/codebook_sweep");
  const double tvq16 = sweep.cell("tvq_K16", "r_psnr");
  const double vq64 = sweep.cell("vanilla_K64", "r_psnr");
  report(5, tvq16 >= vq64, "codebook efficiency crossover: TVQ@16 reaches vanilla@64",
         "TVQ K=16 r-PSNR " + fmt(tvq16) + " dB vs vanilla K=64 " + fmt(vq64) + " dB");
}

void criterion6(const ExperimentConfig& cfg) {
  MetricsReport rap = run_rap_ablation(cfg);
  export_report(rap, cfg.out_dir + "/rap_ablation");
  const double before = rap.cell("code_level_only", "recon_loss");
  const double after = rap.cell("plus_image_level", "recon_loss");
  const double rel = (before - after) / before;
  const double acc_before = rap.cell("code_level_only", "index_accuracy");
  const double acc_after = rap.cell("plus_image_level", "index_accuracy");
  report(6, rel >= 0.05, "RAP fine-tuning improves held-out image-level reconstruction loss",
         "loss " + fmt(before, 6) + " -> " + fmt(after, 6) + " (rel " + fmt(rel * 100, 2) +
             "%, need >= 5%); index accuracy " + fmt(acc_before * 100, 1) + "% -> " +
             fmt(acc_after * 100, 1) + "% (sign unconstrained)");
}

void criterion7(const ExperimentConfig& cfg) {
  MetricsReport probe = run_decomposition_probe(cfg);
  export_report(probe, cfg.out_dir + "/decomposition_probe");
  int corr_wins = 0, grad_wins = 0;
  const int n = static_cast<int>(probe.rows.size());
  for (const auto& row : probe.rows) {
    if (row[0] > row[1]) corr_wins++;  // corr_structure vs corr_texture
    if (row[3] > row[2]) grad_wins++;  // grad_energy_texture vs structure
  }
  const double fc = static_cast<double>(corr_wins) / n;
  const double fg = static_cast<double>(grad_wins) / n;
  report(7, fc >= 0.9 && fg >= 0.9, "branch-only decodes decompose structure and texture",
         "structure-corr wins " + fmt(fc * 100, 1) + "% of " + std::to_string(n) +
             " images, texture-gradient wins " + fmt(fg * 100, 1) + "% (both need >= 90%)");
}

void criterion8(const ExperimentConfig& cfg) {
  MetricsReport sweep = run_structure_factor_sweep(cfg);
  export_report(sweep, cfg.out_dir + "/structure_factor_sweep");
  const double r8 = sweep.cell("factor_8", "r_psnr");
  const double r16 = sweep.cell("factor_16", "r_psnr");
  const double r32 = sweep.cell("factor_32", "r_psnr");
  const bool pass = (r8 >= r16 - 0.1) && (r16 >= r32 - 0.1);
  report(8, pass, "reconstruction quality is non-increasing in the structure factor",
         "r-PSNR " + fmt(r8) + " @8x, " + fmt(r16) + " @16x, " + fmt(r32) + " @32x (tolerance 0.1 dB)");
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism and provenance.

void criterion9() {
  namespace fs = std::filesystem;
  bool pass = true;
  std::string why;

  auto mini = [&](const std::string& leaf) {
    Config cfg;
    cfg.set("scale.hr_size", "16");
    cfg.set("scale.texture_factor", "4");
    cfg.set("scale.structure_factor", "8");
    cfg.set("scale.texture_channels", "6");
    cfg.set("scale.structure_channels", "3");
    cfg.set("net.trunk_width", "6");
    cfg.set("net.trunk_cap", "12");
    cfg.set("net.down_width", "6");
    cfg.set("corpus.n", "8");
    cfg.set("corpus.eval_fraction", "0.25");
    cfg.set("codebook.K", "8");
    cfg.set("train.stage1a_steps", "10");
    cfg.set("train.stage1_steps", "12");
    cfg.set("train.code_steps", "12");
    cfg.set("train.rap_steps", "4");
    cfg.set("train.batch_size", "2");
    cfg.set("run.out_dir", (fs::temp_directory_path() / leaf).string());
    return resolve_experiment_config(cfg);
  };

  // identical config + seed in two fresh output dirs: every metric bit-exact
  ExperimentConfig a = mini("tvqsr_accept_det_a");
  ExperimentConfig b = mini("tvqsr_accept_det_b");
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
  MetricsReport ra = run_tvq_vs_vq_ablation(a);
  MetricsReport rb = run_tvq_vs_vq_ablation(b);
  for (size_t r = 0; r < ra.rows.size() && pass; r++)
    for (size_t c = 0; c < ra.rows[r].size(); c++)
      if (std::memcmp(&ra.rows[r][c], &rb.rows[r][c], sizeof(double)) != 0) {
        pass = false;
        why = "fresh reruns diverged at " + ra.row_labels[r] + "/" + ra.columns[c];
      }
  // warm-cache restart: same again
  MetricsReport rc = run_tvq_vs_vq_ablation(a);
  for (size_t r = 0; r < ra.rows.size() && pass; r++)
    for (size_t c = 0; c < ra.rows[r].size(); c++)
      if (std::memcmp(&ra.rows[r][c], &rc.rows[r][c], sizeof(double)) != 0) {
        pass = false;
        why = "warm-cache restart drifted at " + ra.row_labels[r] + "/" + ra.columns[c];
      }
  if (pass && ra.provenance != rb.provenance) {
    pass = false;
    why = "checkpoint hashes differ between identical runs";
  }

  // checkpoint round trip is bit-exact
  if (pass) {
    Rng rng(0xACC9);
    TvqModel m = make_tvq_model(
        ScaleConfig{.hr_size = 16, .texture_factor = 4, .structure_factor = 8, .texture_channels = 6,
                    .structure_channels = 3},
        8, 77, ModelVariant::Tvq, NetHyper{.trunk_width = 6, .trunk_cap = 12, .down_width = 6});
    ParamList params = m.all_params();
    const std::string path = (fs::temp_directory_path() / "tvqsr_accept_ckpt.bin").string();
    save_checkpoint(path, params);
    TvqModel m2 = make_tvq_model(
        ScaleConfig{.hr_size = 16, .texture_factor = 4, .structure_factor = 8, .texture_channels = 6,
                    .structure_channels = 3},
        8, 78, ModelVariant::Tvq, NetHyper{.trunk_width = 6, .trunk_cap = 12, .down_width = 6});
    ParamList params2 = m2.all_params();
    load_checkpoint(path, params2);
    for (size_t i = 0; i < params.size() && pass; i++) {
      auto va = params[i].value.values();
      auto vb = params2[i].value.values();
      if (std::memcmp(va.data(), vb.data(), va.size() * sizeof(scalar)) != 0) {
        pass = false;
        why = "checkpoint round trip not bit-exact for " + params[i].name;
      }
    }
    fs::remove(path);
    fs::remove(path + ".manifest");
  }
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
  report(9, pass, "determinism and provenance",
         pass ? "fresh rerun, warm-cache restart and checkpoint round trip all bit-exact" : why);
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);  // stream lines as criteria finish
  if (fast_mode())
    std::cout << "[note] TVQSR_ACCEPT_FAST=1: shrunk budgets, criteria 4-8 are smoke-only" << std::endl;

  criterion1();
  criterion2();
  criterion3();

  ExperimentConfig cfg = acceptance_config();
  criterion4_5(cfg);
  criterion6(cfg);
  criterion7(cfg);
  criterion8(cfg);
  criterion9();

  if (g_failures == 0) {
    std::cout << "acceptance: all criteria passed" << std::endl;
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " criteria FAILED" << std::endl;
  return 1;
}
