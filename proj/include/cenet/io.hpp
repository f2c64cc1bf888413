#pragma once

#include <string>

#include "cenet/params.hpp"

namespace cenet {

/// Binary PGM (P5, maxval 255). Pixels map to p / 255; header comments are accepted on read.
Tensor read_pgm(const std::string& path);
// Writes floor(v * 255 + 0.5) clamped to [0, 255]. Expects a 1 x 1 x H x W tensor.
void write_pgm(const std::string& path, const Tensor& image);

/// "CENT", u32 version (1), u32 tensor count, then per tensor: u16 name length,
/// name bytes, u8 ndim, ndim x u32 dims, f64 values. Everything little-endian.
void save_checkpoint(const std::string& path, const ParamSet& params);
// Loads into existing tensors. Every stored name and shape must match `params` exactly.
void load_checkpoint(const std::string& path, ParamSet& params);
// Reads a checkpoint into a fresh ParamSet.
ParamSet read_checkpoint(const std::string& path);

enum class DumpMode { csv, pgm_grid };

/// csv: header "n,c,y,x,value" then one row per element, shortest round-trip
/// decimal form. pgm_grid: every (n, c) map min-max normalized to [0, 255] and
/// tiled row-major on a ceil(sqrt(N*C))-wide grid; constant maps become zero tiles.
void dump_features(const std::string& path, const Tensor& features, DumpMode mode);

}  // namespace cenet
