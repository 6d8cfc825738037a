#include "depgraph/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"

namespace depgraph {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out = "DGCK";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ck.fingerprint);
  put_str(out, ck.kind);
  put_str(out, ck.config);
  put_str(out, ck.rng_state);
  const auto& tensors = ck.params.tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_str(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, 4) != "DGCK") throw IoError("not a checkpoint file");
  Cursor c(bytes.substr(4));
  const auto version = c.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.fingerprint = c.get<std::uint64_t>();
  ck.kind = c.str();
  ck.config = c.str();
  ck.rng_state = c.str();
  const auto count = c.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = c.str();
    const auto rank = c.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = c.get<std::uint32_t>();
    Tensor t(shape);
    for (double& v : t.data) v = c.get<double>();
    ck.params.set(name, std::move(t));
  }
  if (!c.done()) throw IoError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_text_file(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint) {
  Checkpoint ck = parse_checkpoint(read_text_file(path));
  if (expected_fingerprint && *expected_fingerprint != ck.fingerprint) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%016llx, expected %016llx", static_cast<unsigned long long>(ck.fingerprint),
                  static_cast<unsigned long long>(*expected_fingerprint));
    throw ConfigError("checkpoint '" + path.string() + "' was produced by a different configuration (fingerprint " +
                      buf + ")");
  }
  return ck;
}

}  // namespace depgraph
