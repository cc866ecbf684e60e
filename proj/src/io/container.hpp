/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ag/array.hpp"

namespace cntm::io {

// Binary named-tensor container used both for model checkpoints and for the
// feature companions of corpus files. Layout (all integers little-endian):
//
//   magic "CNTM" | u32 format version | u64 fingerprint | u64 tensor count
//   per tensor: u32 name length | name bytes | u8 dtype | u32 rank
//               | i64 extents[rank] | raw values
//
// dtype 0 stores float64, dtype 1 float32; readers widen float32 to double.
// The fingerprint field carries the model architecture hash for checkpoints
// and a format tag for feature files, so mismatched files fail loudly.

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  ag::Array<double> value;
};

struct TensorFile {
  std::uint64_t fingerprint = 0;
  std::vector<NamedTensor> tensors;
};

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

}  // namespace cntm::io
