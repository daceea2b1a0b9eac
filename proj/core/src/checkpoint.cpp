#include "tvq/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tvq/hashing.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

namespace tvq {

namespace {
constexpr const char* kMagic = "tvqsr-checkpoint v1";
}

std::string hex64(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; i--) {
    s[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("hash_file: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    h = fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf),
                                               static_cast<size_t>(f.gcount())),
                h);
    if (!f) break;
  }
  return h;
}

void save_checkpoint(const std::string& path, const ParamList& params) {
  std::ofstream blob(path, std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("save_checkpoint: cannot open " + path);
  std::ofstream man(path + ".manifest", std::ios::trunc);
  if (!man) throw std::runtime_error("save_checkpoint: cannot open " + path + ".manifest");

  man << kMagic << "\n";
  man << "count " << params.size() << "\n";
  int64_t offset = 0;
  for (const auto& p : params) {
    man << p.name << " " << p.value.rank();
    for (int i = 0; i < p.value.rank(); i++) man << " " << p.value.dim(i);
    man << " " << offset << "\n";
    for (scalar v : p.value.values()) {
      const double d = static_cast<double>(v);
      blob.write(reinterpret_cast<const char*>(&d), sizeof(double));
    }
    offset += p.value.numel();
  }
  if (!blob || !man) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
  std::ifstream man(path + ".manifest");
  if (!man) throw std::runtime_error("read_checkpoint: cannot open " + path + ".manifest");
  std::string line;
  if (!std::getline(man, line) || line != kMagic)
    throw std::runtime_error("read_checkpoint: bad manifest header in " + path + ".manifest");
  size_t count = 0;
  {
    std::string word;
    if (!(man >> word >> count) || word != "count")
      throw std::runtime_error("read_checkpoint: missing count in " + path + ".manifest");
  }

  std::ifstream blob(path, std::ios::binary);
  if (!blob) throw std::runtime_error("read_checkpoint: cannot open " + path);

  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (size_t i = 0; i < count; i++) {
    std::string name;
    int rank = 0;
    if (!(man >> name >> rank) || rank < 0)
      throw std::runtime_error("read_checkpoint: truncated manifest entry " + std::to_string(i));
    Shape shape(static_cast<size_t>(rank));
    for (int d = 0; d < rank; d++)
      if (!(man >> shape[static_cast<size_t>(d)]))
        throw std::runtime_error("read_checkpoint: truncated shape for " + name);
    int64_t offset = 0;
    if (!(man >> offset)) throw std::runtime_error("read_checkpoint: missing offset for " + name);

    const int64_t n = shape_numel(shape);
    std::vector<scalar> values(static_cast<size_t>(n));
    blob.seekg(offset * static_cast<int64_t>(sizeof(double)));
    for (int64_t j = 0; j < n; j++) {
      double d;
      if (!blob.read(reinterpret_cast<char*>(&d), sizeof(double)))
        throw std::runtime_error("read_checkpoint: blob truncated reading " + name);
      values[static_cast<size_t>(j)] = static_cast<scalar>(d);
    }
    out.emplace_back(name, make_tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(const std::string& path, ParamList& params) {
  auto stored = read_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : stored) {
    if (!by_name.emplace(name, t).second)
      throw std::runtime_error("load_checkpoint: duplicate parameter '" + name + "' in " + path);
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("load_checkpoint: parameter '" + p.name + "' missing from " + path);
    if (it->second.shape() != p.value.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + p.name + "': file " +
                               shape_str(it->second.shape()) + " vs model " + shape_str(p.value.shape()));
    auto src = it->second.values();
    auto dst = p.value.values();
    std::copy(src.begin(), src.end(), dst.begin());
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("load_checkpoint: unexpected parameter '" + by_name.begin()->first + "' in " +
                             path);
}

}  // namespace tvq
