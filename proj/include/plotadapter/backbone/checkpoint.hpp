#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotadapter/backbone/vit.hpp"

namespace pa::vit {

// ---------------------------------------------------------------------------
// Binary container shared by backbone checkpoints and adapter bundles.
//
//   magic      8 bytes  "PLTADPT\0"
//   version    u32
//   meta_len   u32, then meta_len bytes of UTF-8 JSON
//   count      u32
//   count x record:
//     name_len u32, name bytes
//     dtype    u8 (0 = f32, 1 = f64)
//     rank     u8, then rank x u64 extents
//     nbytes   u64, then raw little-endian payload
//   sha256     32 bytes over everything above
//
// All integers are little-endian.

inline constexpr std::uint32_t kContainerVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Trailing hash does not match the content.
class IntegrityError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Bad magic, unsupported version, truncation or malformed records.
class FormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Well-formed file that does not fit the requested model.
class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> records;

  const Tensor* find(const std::string& name) const;
};

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::byte> data);
std::string to_hex(const Digest& digest);

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::byte> data);
  void update(const std::string& text);
  Digest finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<std::byte> encode_container(const Container& container);
Container decode_container(std::span<const std::byte> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);
std::vector<std::byte> read_bytes(const std::filesystem::path& path);

/// Hash over the (name, dtype, shape, payload) of each parameter, in order.
std::string parameters_hash(const num::ParamList& params);

// ---------------------------------------------------------------------------
// Backbone checkpoints

Container backbone_to_container(const Backbone& backbone);
std::unique_ptr<Backbone> backbone_from_container(const Container& container);

void save_checkpoint(const Backbone& backbone, const std::filesystem::path& path);
std::unique_ptr<Backbone> load_checkpoint(const std::filesystem::path& path);

/// Copies every named tensor into the matching parameter. Throws
/// ConfigMismatchError for unknown names or shape/dtype differences.
void assign_parameters(const num::ParamList& params, const std::vector<NamedTensor>& records, bool require_all);

}  // namespace pa::vit
