#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dsiforge/rng.hpp"
#include "dsiforge/tensor.hpp"

namespace dsi {

/// Binary container: "DSF1" magic, then length-prefixed records, all integers
/// u64 little-endian and all values IEEE-754 f64 little-endian:
///
///   magic[4] | n_tensors
///   per tensor: name_len | name bytes | rank | dims[rank] | values[prod(dims)]
///   rng_key | rng_counter | metadata_len | metadata bytes
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  Rng rng;
  std::string metadata;  // free-form, JSON in practice
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws ConfigError on a bad magic, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes via a temporary file and rename so readers never see partial data.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Atomic text/binary file write (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace dsi
