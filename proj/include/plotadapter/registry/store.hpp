#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "plotadapter/registry/record.hpp"

namespace pa::reg {

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DuplicateRecordError : public RegistryError {
 public:
  using RegistryError::RegistryError;
};
class MissingRecordError : public RegistryError {
 public:
  using RegistryError::RegistryError;
};

struct IndexEntry {
  std::string catalog;
  std::string domain;
  std::string id;
  std::string strategy;  // label
  std::uint64_t size = 0;
  std::string file;      // relative to the store root
  std::string sha256;    // of the record file
};

/// Directory holding one backbone checkpoint and many records:
///
///   backbone.ckpt
///   index.json                      rewritten atomically
///   records/<catalog>/<domain>/<id>.bundle
///   .lock                           serializes writers (flock)
///
/// Readers only see index files that were completely written.
class RegistryStore {
 public:
  /// Creates a new store. Throws RegistryError if root already holds one.
  static RegistryStore init(const std::filesystem::path& root, const vit::Backbone& backbone);
  /// Opens an existing store. Throws RegistryError if it is missing or damaged.
  explicit RegistryStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  const std::string& backbone_hash() const { return backbone_hash_; }
  std::filesystem::path backbone_path() const { return root_ / "backbone.ckpt"; }
  std::uintmax_t backbone_size() const;
  std::unique_ptr<vit::Backbone> load_backbone() const;

  /// Stores a record and returns its id (generated from the payload hash when
  /// empty). Throws peft::BackboneMismatchError or DuplicateRecordError.
  std::string put(const AdapterRecord& record);
  /// Throws MissingRecordError; the returned payload is bit-identical to the stored one.
  AdapterRecord get(const std::string& catalog, const std::string& domain, const std::string& id) const;
  std::vector<IndexEntry> list() const;
  void remove(const std::string& catalog, const std::string& domain, const std::string& id);
  /// Bytes used by backbone, index and records.
  std::uintmax_t total_size() const;

 private:
  std::vector<IndexEntry> read_index() const;
  void write_index(const std::vector<IndexEntry>& entries) const;

  std::filesystem::path root_;
  std::string backbone_hash_;
};

}  // namespace pa::reg
