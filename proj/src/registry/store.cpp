#include "plotadapter/registry/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace pa::reg {

namespace fs = std::filesystem;

namespace {

constexpr int kIndexVersion = 1;

// Exclusive advisory lock on root/.lock for the lifetime of the object.
class WriterLock {
 public:
  explicit WriterLock(const fs::path& root) {
    fd_ = ::open((root / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw RegistryError("cannot open lock file in " + root.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw RegistryError("cannot lock " + root.string());
    }
  }
  ~WriterLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;

 private:
  int fd_ = -1;
};

void check_component(const std::string& value, const char* what) {
  if (value.empty() || value == "." || value == ".." ||
      value.find_first_of("/\\") != std::string::npos || value.find('\0') != std::string::npos)
    throw std::invalid_argument(std::string("invalid ") + what + " '" + value + "'");
}

std::string file_hash(std::span<const std::byte> bytes) { return vit::to_hex(vit::sha256(bytes)); }

}  // namespace

RegistryStore RegistryStore::init(const fs::path& root, const vit::Backbone& backbone) {
  if (fs::exists(root / "index.json")) throw RegistryError("a registry already exists at " + root.string());
  std::error_code ec;
  fs::create_directories(root / "records", ec);
  if (ec) throw RegistryError("cannot create " + root.string() + ": " + ec.message());
  WriterLock lock(root);
  vit::save_checkpoint(backbone, root / "backbone.ckpt");
  const nlohmann::json index = {
      {"version", kIndexVersion}, {"backbone_hash", backbone.content_hash()}, {"records", nlohmann::json::array()}};
  const auto text = index.dump(2);
  vit::write_bytes(root / "index.json", std::as_bytes(std::span(text.data(), text.size())));
  return RegistryStore(root);
}

RegistryStore::RegistryStore(fs::path root) : root_(std::move(root)) {
  if (!fs::exists(root_ / "index.json") || !fs::exists(backbone_path()))
    throw RegistryError("no registry at " + root_.string());
  try {
    const auto bytes = vit::read_bytes(root_ / "index.json");
    const auto j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (j.at("version").get<int>() != kIndexVersion) throw RegistryError("unsupported registry index version");
    backbone_hash_ = j.at("backbone_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw RegistryError("damaged registry index: " + std::string(e.what()));
  }
}

std::uintmax_t RegistryStore::backbone_size() const { return fs::file_size(backbone_path()); }

std::unique_ptr<vit::Backbone> RegistryStore::load_backbone() const {
  auto b = vit::load_checkpoint(backbone_path());
  if (b->content_hash() != backbone_hash_) throw RegistryError("backbone checkpoint does not match the registry index");
  return b;
}

std::vector<IndexEntry> RegistryStore::read_index() const {
  const auto bytes = vit::read_bytes(root_ / "index.json");
  std::vector<IndexEntry> out;
  try {
    const auto j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    for (const auto& e : j.at("records"))
      out.push_back({e.at("catalog"), e.at("domain"), e.at("id"), e.at("strategy"), e.at("size"), e.at("file"),
                     e.at("sha256")});
  } catch (const nlohmann::json::exception& e) {
    throw RegistryError("damaged registry index: " + std::string(e.what()));
  }
  return out;
}

void RegistryStore::write_index(const std::vector<IndexEntry>& entries) const {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& e : entries)
    records.push_back({{"catalog", e.catalog},
                       {"domain", e.domain},
                       {"id", e.id},
                       {"strategy", e.strategy},
                       {"size", e.size},
                       {"file", e.file},
                       {"sha256", e.sha256}});
  const nlohmann::json j = {{"version", kIndexVersion}, {"backbone_hash", backbone_hash_}, {"records", records}};
  const auto text = j.dump(2);
  vit::write_bytes(root_ / "index.json", std::as_bytes(std::span(text.data(), text.size())));
}

std::string RegistryStore::put(const AdapterRecord& record) {
  if (record.backbone_hash != backbone_hash_)
    throw peft::BackboneMismatchError("record was trained on backbone " + record.backbone_hash.substr(0, 12) +
                                      ", registry holds " + backbone_hash_.substr(0, 12));
  // Re-parse so index metadata always reflects the payload itself.
  const auto parsed = record_from_payload(record.payload, record.id);
  const std::string id = record.id.empty() ? file_hash(record.payload).substr(0, 12) : record.id;
  check_component(parsed.catalog, "catalog");
  check_component(parsed.domain, "domain");
  check_component(id, "id");

  WriterLock lock(root_);
  auto entries = read_index();
  for (const auto& e : entries)
    if (e.catalog == parsed.catalog && e.domain == parsed.domain && e.id == id)
      throw DuplicateRecordError("record " + parsed.catalog + "/" + parsed.domain + "/" + id + " already exists");
  const fs::path rel = fs::path("records") / parsed.catalog / parsed.domain / (id + ".bundle");
  fs::create_directories((root_ / rel).parent_path());
  vit::write_bytes(root_ / rel, record.payload);
  entries.push_back({parsed.catalog, parsed.domain, id, parsed.strategy.label(), record.payload.size(), rel.string(),
                     file_hash(record.payload)});
  write_index(entries);
  return id;
}

AdapterRecord RegistryStore::get(const std::string& catalog, const std::string& domain, const std::string& id) const {
  for (const auto& e : read_index()) {
    if (e.catalog != catalog || e.domain != domain || e.id != id) continue;
    auto bytes = vit::read_bytes(root_ / e.file);
    if (file_hash(bytes) != e.sha256) throw RegistryError("record file " + e.file + " does not match the index");
    return record_from_payload(std::move(bytes), id);
  }
  throw MissingRecordError("no record " + catalog + "/" + domain + "/" + id);
}

std::vector<IndexEntry> RegistryStore::list() const { return read_index(); }

void RegistryStore::remove(const std::string& catalog, const std::string& domain, const std::string& id) {
  WriterLock lock(root_);
  auto entries = read_index();
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const IndexEntry& e) { return e.catalog == catalog && e.domain == domain && e.id == id; });
  if (it == entries.end()) throw MissingRecordError("no record " + catalog + "/" + domain + "/" + id);
  const fs::path file = root_ / it->file;
  entries.erase(it);
  write_index(entries);
  std::error_code ec;
  fs::remove(file, ec);
}

std::uintmax_t RegistryStore::total_size() const {
  std::uintmax_t total = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_))
    if (e.is_regular_file()) total += e.file_size();
  return total;
}

}  // namespace pa::reg
