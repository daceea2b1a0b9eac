#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tvq/optimizer.hpp"
#include "tvq/tensor.hpp"

namespace tvq {

// Checkpoint = flat blob of 64-bit little-endian scalars at `path` plus a
// sidecar text manifest at `path + ".manifest"` with one
// "name rank d0..dn offset" line per parameter (offset in scalars).
void save_checkpoint(const std::string& path, const ParamList& params);

// Reads blob + manifest into fresh tensors, manifest order preserved.
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

// Fills existing parameters in place; every name must be present with a
// matching shape. Extra names in the file are an error.
void load_checkpoint(const std::string& path, ParamList& params);

}  // namespace tvq
