/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "common/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "container I/O writes native byte order and is specified as "
              "little-endian");

namespace cntm::io {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'T', 'M'};

template <class T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  CNTM_CHECK(bool(in), ErrorKind::kData,
             "tensor container truncated: " + path);
  return value;
}

}  // namespace

void write_tensor_file(const std::string& path, const TensorFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  CNTM_CHECK(out.is_open(), ErrorKind::kData,
             "cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put(out, kContainerVersion);
  put(out, file.fingerprint);
  put(out, std::uint64_t(file.tensors.size()));
  for (const NamedTensor& t : file.tensors) {
    CNTM_CHECK(t.name.size() <= std::numeric_limits<std::uint32_t>::max(),
               ErrorKind::kData, "tensor name too long: " + t.name);
    put(out, std::uint32_t(t.name.size()));
    out.write(t.name.data(), std::streamsize(t.name.size()));
    put(out, std::uint8_t(0));  // dtype float64
    put(out, std::uint32_t(t.value.shape.size()));
    for (std::int64_t e : t.value.shape) put(out, e);
    out.write(reinterpret_cast<const char*>(t.value.v.data()),
              std::streamsize(t.value.v.size() * sizeof(double)));
  }
  out.flush();
  CNTM_CHECK(bool(out), ErrorKind::kData, "write failed: " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CNTM_CHECK(in.is_open(), ErrorKind::kData, "cannot open: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  CNTM_CHECK(bool(in) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
             ErrorKind::kData, "not a tensor container: " + path);
  const auto version = get<std::uint32_t>(in, path);
  CNTM_CHECK(version == kContainerVersion, ErrorKind::kData,
             "unsupported container version " + std::to_string(version) +
                 ": " + path);
  TensorFile file;
  file.fingerprint = get<std::uint64_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  file.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint32_t>(in, path);
    t.name.resize(name_len);
    in.read(t.name.data(), std::streamsize(name_len));
    CNTM_CHECK(bool(in), ErrorKind::kData,
               "tensor container truncated: " + path);
    const auto dtype = get<std::uint8_t>(in, path);
    CNTM_CHECK(dtype == 0 || dtype == 1, ErrorKind::kData,
               "unknown tensor dtype in " + path);
    const auto rank = get<std::uint32_t>(in, path);
    std::vector<std::int64_t> shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = get<std::int64_t>(in, path);
      CNTM_CHECK(shape[d] >= 0, ErrorKind::kData,
                 "negative extent in " + path);
      numel *= shape[d];
    }
    std::vector<double> values(static_cast<size_t>(numel));
    if (dtype == 0) {
      in.read(reinterpret_cast<char*>(values.data()),
              std::streamsize(values.size() * sizeof(double)));
    } else {
      std::vector<float> narrow(static_cast<size_t>(numel));
      in.read(reinterpret_cast<char*>(narrow.data()),
              std::streamsize(narrow.size() * sizeof(float)));
      for (size_t j = 0; j < narrow.size(); ++j) values[j] = narrow[j];
    }
    CNTM_CHECK(bool(in), ErrorKind::kData,
               "tensor container truncated: " + path);
    t.value = ag::Array<double>::from(std::move(shape), std::move(values));
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace cntm::io
