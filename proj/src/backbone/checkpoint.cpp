#include "plotadapter/backbone/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <openssl/evp.h>

namespace pa::vit {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'L', 'T', 'A', 'D', 'P', 'T', '\0'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::byte> b) { out.insert(out.end(), b.begin(), b.end()); }
  void put_string(const std::string& s) {
    put_bytes(std::as_bytes(std::span<const char>(s.data(), s.size())));
  }
  std::vector<std::byte> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> b) : bytes_(b) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::span<const std::byte> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("container is truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string(std::size_t n) {
    auto s = take(n);
    return std::string(reinterpret_cast<const char*>(s.data()), n);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Container::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r.tensor;
  return nullptr;
}

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 initialisation failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(impl_->ctx); }

void Sha256::update(std::span<const std::byte> data) {
  if (EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1) throw std::runtime_error("SHA-256 update failed");
}

void Sha256::update(const std::string& text) { update(std::as_bytes(std::span<const char>(text.data(), text.size()))); }

Digest Sha256::finish() {
  Digest d{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, reinterpret_cast<unsigned char*>(d.data()), &len) != 1 || len != d.size())
    throw std::runtime_error("SHA-256 finalisation failed");
  return d;
}

Digest sha256(std::span<const std::byte> data) {
  Sha256 h;
  h.update(data);
  return h.finish();
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

std::vector<std::byte> encode_container(const Container& container) {
  Writer w;
  w.put_bytes(std::as_bytes(std::span<const char>(kMagic, 8)));
  w.put<std::uint32_t>(kContainerVersion);
  const std::string meta = container.meta.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.put_string(meta);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(container.records.size()));
  for (const auto& r : container.records) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.name.size()));
    w.put_string(r.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.tensor.dtype()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.tensor.rank()));
    for (auto e : r.tensor.shape()) w.put<std::uint64_t>(e);
    auto payload = r.tensor.bytes();
    w.put<std::uint64_t>(payload.size());
    w.put_bytes(payload);
  }
  const Digest d = sha256(w.out);
  w.put_bytes(std::as_bytes(std::span(d)));
  return std::move(w.out);
}

Container decode_container(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 + 4 + 4 + 4 + 32) throw FormatError("container is truncated");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a plotadapter container (bad magic)");
  const auto body = bytes.first(bytes.size() - 32);
  const Digest stored = [&] {
    Digest d{};
    std::memcpy(d.data(), bytes.data() + body.size(), 32);
    return d;
  }();

  // Integrity first: a corrupted length field should not masquerade as a format problem.
  if (sha256(body) != stored) throw IntegrityError("container checksum mismatch");
  Reader r(body);
  r.take(8);
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));

  Container c;
  const auto meta_len = r.get<std::uint32_t>();
  try {
    c.meta = nlohmann::json::parse(r.get_string(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.get_string(r.get<std::uint32_t>());
    const auto dt = r.get<std::uint8_t>();
    if (dt > 1) throw FormatError("record '" + nt.name + "' has unknown dtype");
    const auto rank = r.get<std::uint8_t>();
    num::Shape shape(rank);
    for (auto& e : shape) {
      e = r.get<std::uint64_t>();
      if (e == 0) throw FormatError("record '" + nt.name + "' has a zero extent");
    }
    if (rank == 0) throw FormatError("record '" + nt.name + "' has rank 0");
    nt.tensor = Tensor(shape, static_cast<DType>(dt));
    const auto nbytes = r.get<std::uint64_t>();
    if (nbytes != nt.tensor.bytes().size()) throw FormatError("record '" + nt.name + "' payload size mismatch");
    auto payload = r.take(nbytes);
    std::memcpy(nt.tensor.mutable_bytes().data(), payload.data(), nbytes);
    c.records.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last record");
  return c;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::byte> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(f.tellg());
  std::vector<std::byte> out(size);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(size));
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return out;
}

std::string parameters_hash(const num::ParamList& params) {
  Sha256 h;
  for (const auto* p : params) {
    h.update(p->name);
    h.update(std::string(1, '\0'));
    h.update(std::string(num::dtype_name(p->value.dtype())));
    h.update(num::shape_str(p->value.shape()));
    h.update(p->value.bytes());
  }
  return to_hex(h.finish());
}

Container backbone_to_container(const Backbone& backbone) {
  Container c;
  c.meta["kind"] = "backbone";
  c.meta["config"] = backbone.config();
  c.meta["dtype"] = num::dtype_name(backbone.dtype());
  c.meta["content_hash"] = backbone.content_hash();
  for (const auto* p : backbone.parameters()) c.records.push_back({p->name, p->value});
  return c;
}

void assign_parameters(const num::ParamList& params, const std::vector<NamedTensor>& records, bool require_all) {
  std::size_t matched = 0;
  for (const auto& r : records) {
    Parameter* p = params.find(r.name);
    if (!p) throw ConfigMismatchError("unexpected tensor '" + r.name + "'");
    if (p->value.shape() != r.tensor.shape() || p->value.dtype() != r.tensor.dtype()) {
      throw ConfigMismatchError("tensor '" + r.name + "' is " + num::dtype_name(r.tensor.dtype()) +
                                num::shape_str(r.tensor.shape()) + ", model expects " +
                                num::dtype_name(p->value.dtype()) + num::shape_str(p->value.shape()));
    }
    ++matched;
  }
  if (require_all && matched != params.size()) {
    throw ConfigMismatchError("container provides " + std::to_string(matched) + " of " +
                              std::to_string(params.size()) + " parameters");
  }
  // Validate everything before touching the model so a failure leaves it intact.
  for (const auto& r : records) params.find(r.name)->value = r.tensor;
}

std::unique_ptr<Backbone> backbone_from_container(const Container& container) {
  if (container.meta.value("kind", "") != "backbone") throw ConfigMismatchError("container does not hold a backbone");
  BackboneConfig cfg;
  DType dtype;
  try {
    cfg = container.meta.at("config").get<BackboneConfig>();
    const auto name = container.meta.at("dtype").get<std::string>();
    if (name == "f32") dtype = DType::f32;
    else if (name == "f64") dtype = DType::f64;
    else throw FormatError("unknown dtype " + name);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("backbone metadata incomplete: ") + e.what());
  }
  auto backbone = std::make_unique<Backbone>(cfg, dtype, 0);
  assign_parameters(backbone->parameters(), container.records, true);
  if (container.meta.contains("content_hash") && container.meta["content_hash"] != backbone->content_hash())
    throw IntegrityError("backbone content hash does not match its metadata");
  return backbone;
}

void save_checkpoint(const Backbone& backbone, const std::filesystem::path& path) {
  write_bytes(path, encode_container(backbone_to_container(backbone)));
}

std::unique_ptr<Backbone> load_checkpoint(const std::filesystem::path& path) {
  return backbone_from_container(decode_container(read_bytes(path)));
}

}  // namespace pa::vit
