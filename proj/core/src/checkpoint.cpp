// SPDX-License-Identifier: Apache-2.0
#include "matchkit/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>

#include "matchkit/error.hpp"

namespace matchkit {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::uint8_t, 8> kMagic{'M', 'N', 'C', 'K', 'P', 'T', '1', '\0'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Shape& shape, std::span<const double> values) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) u64(d);
    for (double v : values) f64(v);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > in_.size() - pos_) throw DataError("checkpoint: truncated file");
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

bool starts_with(const std::string& s, const char* prefix, std::string* rest) {
  const std::size_t n = std::strlen(prefix);
  if (s.compare(0, n, prefix) != 0) return false;
  *rest = s.substr(n);
  return true;
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

bool Checkpoint::identical(const Checkpoint& other) const {
  return config_text == other.config_text && config_hash == other.config_hash &&
         episode == other.episode && rng_state == other.rng_state &&
         params.identical(other.params) && optimizer.identical(other.optimizer);
}

std::uint64_t config_hash(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u64(ck.config_hash);
  w.u64(ck.episode);
  w.u64(ck.optimizer.step);
  w.str(ck.config_text);
  w.str(ck.rng_state);

  std::uint32_t count = 0;
  count += static_cast<std::uint32_t>(ck.params.tensors().size());
  count += static_cast<std::uint32_t>(2 * ck.params.batchnorm_stats().size());
  count += static_cast<std::uint32_t>(ck.optimizer.m.size() + ck.optimizer.v.size());
  w.u32(count);
  for (const auto& [name, t] : ck.params.tensors()) w.tensor("param/" + name, t.shape(), t.data());
  for (const auto& [name, s] : ck.params.batchnorm_stats()) {
    w.tensor("bn_mean/" + name, {s.mean.size()}, s.mean);
    w.tensor("bn_var/" + name, {s.var.size()}, s.var);
  }
  for (const auto& [name, m] : ck.optimizer.m) w.tensor("adam_m/" + name, {m.size()}, m);
  for (const auto& [name, v] : ck.optimizer.v) w.tensor("adam_v/" + name, {v.size()}, v);
  w.u32(crc_of(w.buffer()));
  return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 4 ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DataError("checkpoint: bad magic");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc_of(body)) throw ChecksumError("checkpoint: CRC32 mismatch (corrupt file)");

  Reader r(body);
  r.take(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_hash = r.u64();
  ck.episode = r.u64();
  ck.optimizer.step = r.u64();
  ck.config_text = r.str();
  ck.rng_state = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.f64();
    std::string key;
    if (starts_with(name, "param/", &key)) {
      ck.params.add(key, Tensor(shape, std::move(values), true));
    } else if (starts_with(name, "bn_mean/", &key)) {
      ck.params.batchnorm_stats()[key].mean = std::move(values);
    } else if (starts_with(name, "bn_var/", &key)) {
      ck.params.batchnorm_stats()[key].var = std::move(values);
    } else if (starts_with(name, "adam_m/", &key)) {
      ck.optimizer.m[key] = std::move(values);
    } else if (starts_with(name, "adam_v/", &key)) {
      ck.optimizer.v[key] = std::move(values);
    } else {
      throw DataError("checkpoint: unknown record '" + name + "'");
    }
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const fs::path& path, std::uint64_t expected_hash) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != expected_hash) {
    throw ConfigMismatchError("checkpoint " + path.string() +
                              " was written under a different configuration (hash " +
                              std::to_string(ck.config_hash) + ", expected " +
                              std::to_string(expected_hash) + ")");
  }
  return ck;
}

}  // namespace matchkit
