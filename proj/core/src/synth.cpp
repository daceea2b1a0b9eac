#include "tvq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tvq/rng.hpp"

namespace tvq {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_hr(const Tensor& X, const char* who) {
  if (X.rank() != 3 || X.dim(0) != 3 || X.dim(1) != X.dim(2))
    throw std::invalid_argument(std::string(who) + ": expected square (3,H,H), got " + shape_str(X.shape()));
}

scalar* plane(Tensor& t, int c) { return t.values().data() + static_cast<int64_t>(c) * t.dim(1) * t.dim(2); }
const scalar* plane(const Tensor& t, int c) {
  return t.values().data() + static_cast<int64_t>(c) * t.dim(1) * t.dim(2);
}

Tensor pool_mean(const Tensor& img, int factor) {
  check_hr(img, "pool_mean");
  const int H = img.dim(1);
  if (H % factor != 0)
    throw std::invalid_argument("pool_mean: factor " + std::to_string(factor) + " does not divide " +
                                std::to_string(H));
  const int Ho = H / factor;
  Tensor out = zeros({3, Ho, Ho});
  const double inv = 1.0 / (factor * factor);
  for (int c = 0; c < 3; c++) {
    const scalar* src = plane(img, c);
    scalar* dst = plane(out, c);
    for (int oy = 0; oy < Ho; oy++)
      for (int ox = 0; ox < Ho; ox++) {
        double acc = 0;
        for (int dy = 0; dy < factor; dy++)
          for (int dx = 0; dx < factor; dx++)
            acc += static_cast<double>(src[static_cast<int64_t>(oy * factor + dy) * H + ox * factor + dx]);
        dst[static_cast<int64_t>(oy) * Ho + ox] = static_cast<scalar>(acc * inv);
      }
  }
  return out;
}

}  // namespace

Tensor gaussian_blur(const Tensor& image, double sigma) {
  check_hr(image, "gaussian_blur");
  if (sigma <= 1e-12) return clone_values(image);
  const int H = image.dim(1);
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; i++) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;

  Tensor tmp = zeros({3, H, H});
  Tensor out = zeros({3, H, H});
  for (int c = 0; c < 3; c++) {
    const scalar* src = plane(image, c);
    scalar* mid = plane(tmp, c);
    scalar* dst = plane(out, c);
    for (int y = 0; y < H; y++)
      for (int x = 0; x < H; x++) {
        double acc = 0;
        for (int i = -radius; i <= radius; i++) {
          const int xi = std::clamp(x + i, 0, H - 1);
          acc += kernel[static_cast<size_t>(i + radius)] * static_cast<double>(src[static_cast<int64_t>(y) * H + xi]);
        }
        mid[static_cast<int64_t>(y) * H + x] = static_cast<scalar>(acc);
      }
    for (int y = 0; y < H; y++)
      for (int x = 0; x < H; x++) {
        double acc = 0;
        for (int i = -radius; i <= radius; i++) {
          const int yi = std::clamp(y + i, 0, H - 1);
          acc += kernel[static_cast<size_t>(i + radius)] * static_cast<double>(mid[static_cast<int64_t>(yi) * H + x]);
        }
        dst[static_cast<int64_t>(y) * H + x] = static_cast<scalar>(acc);
      }
  }
  return out;
}

Tensor gen_structure_field(uint64_t seed, int size) {
  Rng rng(seed);
  Tensor field = zeros({3, size, size});

  // Linear gradient background per channel. The value range stays clear of
  // [0,1] so that adding texture (amplitude <= 0.22) rarely clips.
  for (int c = 0; c < 3; c++) {
    const double base = rng.uniform(0.4, 0.6);
    const double gx = rng.uniform(-0.15, 0.15);
    const double gy = rng.uniform(-0.15, 0.15);
    scalar* p = plane(field, c);
    for (int y = 0; y < size; y++)
      for (int x = 0; x < size; x++)
        p[static_cast<int64_t>(y) * size + x] =
            static_cast<scalar>(base + gx * (static_cast<double>(x) / size - 0.5) +
                                gy * (static_cast<double>(y) / size - 0.5));
  }

  // 2-5 soft-edged ellipses blended over the background.
  const int n_shapes = 2 + static_cast<int>(rng.below(4));
  for (int s = 0; s < n_shapes; s++) {
    const double cx = rng.uniform(0.15, 0.85) * size;
    const double cy = rng.uniform(0.15, 0.85) * size;
    const double rx = rng.uniform(0.12, 0.38) * size;
    const double ry = rng.uniform(0.12, 0.38) * size;
    const double theta = rng.uniform(0.0, kPi);
    const double edge = rng.uniform(3.0, 6.0);  // soft edge width in pixels
    const double ct = std::cos(theta), st = std::sin(theta);
    double color[3];
    for (auto& cc : color) cc = rng.uniform(0.28, 0.72);
    for (int y = 0; y < size; y++)
      for (int x = 0; x < size; x++) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ct + dy * st) / rx;
        const double v = (-dx * st + dy * ct) / ry;
        const double r = std::sqrt(u * u + v * v);
        // signed distance from the unit ellipse, roughly in pixels
        const double d = (1.0 - r) * std::min(rx, ry);
        const double m = 1.0 / (1.0 + std::exp(-d / edge * 4.0));
        for (int c = 0; c < 3; c++) {
          scalar* p = plane(field, c);
          const int64_t i = static_cast<int64_t>(y) * size + x;
          p[i] = static_cast<scalar>((1.0 - m) * p[i] + m * color[c]);
        }
      }
  }

  // Band-limit, then keep within [0,1].
  Tensor blurred = gaussian_blur(field, 2.0);
  for (auto& v : blurred.values()) v = std::clamp(v, scalar(0), scalar(1));
  return blurred;
}

int texture_bank_size() { return 9; }

Tensor gen_texture_field(uint64_t seed, int texture_id, int size) {
  if (texture_id < 0 || texture_id >= texture_bank_size())
    throw std::invalid_argument("gen_texture_field: unknown texture_id " + std::to_string(texture_id));
  Rng rng(mix_seed(seed, static_cast<uint64_t>(texture_id) + 17));
  const double amp = rng.uniform(0.10, 0.22);
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  std::vector<double> mono(static_cast<size_t>(size) * size, 0.0);
  auto at = [&](int y, int x) -> double& { return mono[static_cast<size_t>(y) * size + x]; };

  switch (texture_id) {
    case 0:   // gratings with integer cycle counts: exact DFT bins, and an
    case 1:   // integer number of cycles per 8x pooling block on each axis
    case 2:
    case 3: {
      const int k = std::max(1, size / 8);
      int fx = 0, fy = 0;
      if (texture_id == 0) fx = k;
      if (texture_id == 1) fy = k;
      if (texture_id == 2) fx = fy = k;
      if (texture_id == 3) {
        fx = k;
        fy = -k;
      }
      for (int y = 0; y < size; y++)
        for (int x = 0; x < size; x++)
          at(y, x) = std::sin(2.0 * kPi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) / size +
                              phase);
      break;
    }
    case 4:   // checkerboards
    case 5: {
      const int period = texture_id == 4 ? 2 : 4;
      const int half = period / 2;
      for (int y = 0; y < size; y++)
        for (int x = 0; x < size; x++)
          at(y, x) = ((x / half + y / half) % 2 == 0) ? 1.0 : -1.0;
      break;
    }
    case 6: {  // high-pass filtered white noise
      for (auto& v : mono) v = rng.uniform(-1.0, 1.0);
      std::vector<double> lp(mono.size());
      for (int y = 0; y < size; y++)
        for (int x = 0; x < size; x++) {
          double acc = 0;
          for (int dy = -1; dy <= 1; dy++)
            for (int dx = -1; dx <= 1; dx++) {
              const int yy = std::clamp(y + dy, 0, size - 1);
              const int xx = std::clamp(x + dx, 0, size - 1);
              acc += mono[static_cast<size_t>(yy) * size + xx];
            }
          lp[static_cast<size_t>(y) * size + x] = acc / 9.0;
        }
      for (size_t i = 0; i < mono.size(); i++) mono[i] -= lp[i];
      break;
    }
    case 7:   // square-wave stripes
    case 8: {
      const int period = 4;
      for (int y = 0; y < size; y++)
        for (int x = 0; x < size; x++) {
          const int t = texture_id == 7 ? x : y;
          at(y, x) = (t % period) < period / 2 ? 1.0 : -1.0;
        }
      break;
    }
    default:
      break;
  }

  // Exact zero mean, then scale to the drawn amplitude.
  double mean = 0;
  for (double v : mono) mean += v;
  mean /= static_cast<double>(mono.size());
  double peak = 0;
  for (auto& v : mono) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  const double scale = peak > 0 ? amp / peak : 0.0;

  Tensor out = zeros({3, size, size});
  for (int c = 0; c < 3; c++) {
    scalar* p = plane(out, c);
    for (size_t i = 0; i < mono.size(); i++) p[i] = static_cast<scalar>(mono[i] * scale);
  }
  return out;
}

std::pair<Tensor, Tensor> compose_hr(const Tensor& structure, const std::vector<Tensor>& textures,
                                     const std::vector<Tensor>& masks) {
  check_hr(structure, "compose_hr");
  if (textures.size() != masks.size())
    throw std::invalid_argument("compose_hr: " + std::to_string(textures.size()) + " textures vs " +
                                std::to_string(masks.size()) + " masks");
  for (const auto& t : textures)
    if (t.shape() != structure.shape())
      throw std::invalid_argument("compose_hr: texture shape " + shape_str(t.shape()) + " != structure " +
                                  shape_str(structure.shape()));
  for (const auto& m : masks)
    if (m.shape() != structure.shape())
      throw std::invalid_argument("compose_hr: mask shape " + shape_str(m.shape()) + " != structure " +
                                  shape_str(structure.shape()));

  Tensor textured = zeros(structure.shape());
  auto tx = textured.values();
  for (size_t r = 0; r < textures.size(); r++) {
    auto tv = textures[r].values();
    auto mv = masks[r].values();
    for (size_t i = 0; i < tx.size(); i++) tx[i] += mv[i] * tv[i];
  }

  Tensor X = zeros(structure.shape());
  auto xv = X.values();
  auto sv = structure.values();
  for (size_t i = 0; i < xv.size(); i++) xv[i] = std::clamp(sv[i] + tx[i], scalar(0), scalar(1));
  return {X, textured};
}

Tensor degrade_to_lr(const Tensor& X, const DegradationConfig& cfg) {
  check_hr(X, "degrade_to_lr");
  if (X.dim(1) % cfg.downsample_factor != 0)
    throw std::invalid_argument("degrade_to_lr: factor " + std::to_string(cfg.downsample_factor) +
                                " does not divide image size " + std::to_string(X.dim(1)));
  Rng rng(cfg.seed);
  const double sigma_blur = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  const double sigma_noise = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);

  Tensor blurred = gaussian_blur(X, sigma_blur);
  Tensor lr = pool_mean(blurred, cfg.downsample_factor);
  auto v = lr.values();
  for (auto& x : v) {
    x += static_cast<scalar>(rng.normal() * sigma_noise);
    x = std::clamp(x, scalar(0), scalar(1));
  }
  return lr;
}

Tensor make_xdown(const Tensor& X, int factor) {
  check_hr(X, "make_xdown");
  if (X.dim(1) % factor != 0)
    throw std::invalid_argument("make_xdown: factor " + std::to_string(factor) + " does not divide size " +
                                std::to_string(X.dim(1)));
  return pool_mean(X, factor);
}

namespace {

Tensor gen_region_mask(Rng& rng, int size) {
  Tensor mask = zeros({3, size, size});
  const double cx = rng.uniform(0.2, 0.8) * size;
  const double cy = rng.uniform(0.2, 0.8) * size;
  const double r0 = rng.uniform(0.25, 0.55) * size;
  const double edge = rng.uniform(4.0, 8.0);
  for (int y = 0; y < size; y++)
    for (int x = 0; x < size; x++) {
      const double d = r0 - std::hypot(x - cx, y - cy);
      const scalar m = static_cast<scalar>(1.0 / (1.0 + std::exp(-d / edge)));
      for (int c = 0; c < 3; c++)
        plane(mask, c)[static_cast<int64_t>(y) * size + x] = m;
    }
  return mask;
}

ImageSample gen_sample(uint64_t sample_seed, const CorpusConfig& cfg) {
  const int H = cfg.hr_size;
  Rng rng(mix_seed(sample_seed, 7));

  ImageSample s;
  s.seed = sample_seed;
  s.structure = gen_structure_field(mix_seed(sample_seed, 101), H);

  const int n_regions = 1 + static_cast<int>(rng.below(3));
  std::vector<Tensor> textures, masks;
  for (int r = 0; r < n_regions; r++) {
    const int tid = static_cast<int>(rng.below(static_cast<uint64_t>(texture_bank_size())));
    if (r == 0) s.texture_id = tid;
    textures.push_back(gen_texture_field(mix_seed(sample_seed, 200 + static_cast<uint64_t>(r)), tid, H));
    masks.push_back(gen_region_mask(rng, H));
  }
  s.structure_id = n_regions;

  auto [X, textured] = compose_hr(s.structure, textures, masks);
  s.X = X;
  s.textured = textured;

  DegradationConfig deg = cfg.degradation;
  deg.seed = mix_seed(mix_seed(cfg.degradation.seed, sample_seed), 404);
  s.Y = degrade_to_lr(s.X, deg);
  s.X_down = make_xdown(s.X, cfg.xdown_factor);
  return s;
}

void write_tensor_raw(std::ofstream& f, const Tensor& t) {
  for (scalar v : t.values()) {
    const double d = static_cast<double>(v);
    f.write(reinterpret_cast<const char*>(&d), sizeof(double));
  }
}

Tensor read_tensor_raw(std::ifstream& f, Shape shape, const std::string& path) {
  const int64_t n = shape_numel(shape);
  std::vector<scalar> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; i++) {
    double d;
    if (!f.read(reinterpret_cast<char*>(&d), sizeof(double)))
      throw std::runtime_error("corpus_load: truncated image data in " + path);
    v[static_cast<size_t>(i)] = static_cast<scalar>(d);
  }
  return make_tensor(std::move(shape), std::move(v));
}

}  // namespace

Corpus corpus_generate(int n, uint64_t seed, const CorpusConfig& cfg) {
  if (n < 1) throw std::invalid_argument("corpus_generate: n must be >= 1, got " + std::to_string(n));
  if (cfg.hr_size % 4 != 0 || cfg.hr_size % cfg.xdown_factor != 0)
    throw std::invalid_argument("corpus_generate: hr_size " + std::to_string(cfg.hr_size) +
                                " must be divisible by 4 and by xdown " + std::to_string(cfg.xdown_factor));
  Corpus corpus;
  corpus.config = cfg;
  corpus.seed = seed;
  corpus.samples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; i++)
    corpus.samples.push_back(gen_sample(mix_seed(seed, static_cast<uint64_t>(i) + 1), cfg));
  return corpus;
}

void corpus_save(const Corpus& corpus, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("corpus_save: cannot open " + path);
  f << "tvqsr-corpus v1\n";
  f << "n " << corpus.samples.size() << "\n";
  f << "hr_size " << corpus.config.hr_size << "\n";
  f << "xdown_factor " << corpus.config.xdown_factor << "\n";
  f << "lr_factor " << corpus.config.degradation.downsample_factor << "\n";
  f << "blur_sigma " << corpus.config.degradation.blur_sigma_min << " "
    << corpus.config.degradation.blur_sigma_max << "\n";
  f << "noise_sigma " << corpus.config.degradation.noise_sigma_min << " "
    << corpus.config.degradation.noise_sigma_max << "\n";
  f << "degradation_seed " << corpus.config.degradation.seed << "\n";
  f << "seed " << corpus.seed << "\n";
  for (const auto& s : corpus.samples)
    f << "sample " << s.seed << " " << s.structure_id << " " << s.texture_id << "\n";
  f << "end_header\n";
  for (const auto& s : corpus.samples) {
    write_tensor_raw(f, s.X);
    write_tensor_raw(f, s.Y);
    write_tensor_raw(f, s.X_down);
    write_tensor_raw(f, s.structure);
    write_tensor_raw(f, s.textured);
  }
  if (!f) throw std::runtime_error("corpus_save: write failed for " + path);
}

namespace {

Tensor stack_field(const std::vector<const ImageSample*>& batch, const Tensor ImageSample::* field) {
  if (batch.empty()) throw std::invalid_argument("stack: empty batch");
  const Tensor& first = batch[0]->*field;
  const int C = first.dim(0), H = first.dim(1), W = first.dim(2);
  std::vector<scalar> v;
  v.reserve(static_cast<size_t>(batch.size()) * C * H * W);
  for (const ImageSample* s : batch) {
    const Tensor& t = s->*field;
    if (t.shape() != first.shape())
      throw std::invalid_argument("stack: mixed shapes " + shape_str(t.shape()) + " vs " +
                                  shape_str(first.shape()));
    auto tv = t.values();
    v.insert(v.end(), tv.begin(), tv.end());
  }
  return make_tensor({static_cast<int>(batch.size()), C, H, W}, std::move(v));
}

}  // namespace

Tensor stack_x(const std::vector<const ImageSample*>& batch) { return stack_field(batch, &ImageSample::X); }
Tensor stack_y(const std::vector<const ImageSample*>& batch) { return stack_field(batch, &ImageSample::Y); }
Tensor stack_xdown(const std::vector<const ImageSample*>& batch) {
  return stack_field(batch, &ImageSample::X_down);
}

Corpus corpus_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("corpus_load: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "tvqsr-corpus v1")
    throw std::runtime_error("corpus_load: bad header in " + path);

  Corpus corpus;
  size_t n = 0;
  std::vector<uint64_t> seeds;
  std::vector<int> sids, tids;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "n")
      is >> n;
    else if (key == "hr_size")
      is >> corpus.config.hr_size;
    else if (key == "xdown_factor")
      is >> corpus.config.xdown_factor;
    else if (key == "lr_factor")
      is >> corpus.config.degradation.downsample_factor;
    else if (key == "blur_sigma")
      is >> corpus.config.degradation.blur_sigma_min >> corpus.config.degradation.blur_sigma_max;
    else if (key == "noise_sigma")
      is >> corpus.config.degradation.noise_sigma_min >> corpus.config.degradation.noise_sigma_max;
    else if (key == "degradation_seed")
      is >> corpus.config.degradation.seed;
    else if (key == "seed")
      is >> corpus.seed;
    else if (key == "sample") {
      uint64_t s;
      int sid, tid;
      is >> s >> sid >> tid;
      seeds.push_back(s);
      sids.push_back(sid);
      tids.push_back(tid);
    } else {
      throw std::runtime_error("corpus_load: unknown header key '" + key + "' in " + path);
    }
    if (!is) throw std::runtime_error("corpus_load: malformed header line '" + line + "' in " + path);
  }
  if (line != "end_header") throw std::runtime_error("corpus_load: missing end_header in " + path);
  if (seeds.size() != n)
    throw std::runtime_error("corpus_load: header claims " + std::to_string(n) + " samples, found " +
                             std::to_string(seeds.size()));

  const int H = corpus.config.hr_size;
  const int HL = H / corpus.config.degradation.downsample_factor;
  const int HD = H / corpus.config.xdown_factor;
  corpus.samples.reserve(n);
  for (size_t i = 0; i < n; i++) {
    ImageSample s;
    s.seed = seeds[i];
    s.structure_id = sids[i];
    s.texture_id = tids[i];
    s.X = read_tensor_raw(f, {3, H, H}, path);
    s.Y = read_tensor_raw(f, {3, HL, HL}, path);
    s.X_down = read_tensor_raw(f, {3, HD, HD}, path);
    s.structure = read_tensor_raw(f, {3, H, H}, path);
    s.textured = read_tensor_raw(f, {3, H, H}, path);
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace tvq
