#include "sfus/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace sfus::nn {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'U', 'S'};
constexpr std::string_view kMetaPrefix = "meta:";

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint make_checkpoint(const ParameterSet& params, std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const Parameter* p : params.all()) ckpt.tensors.emplace_back(p->name(), p->value());
  return ckpt;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  auto put_name = [&](const std::string& name) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  };
  for (const auto& [key, value] : ckpt.meta) {
    if (key.find('=') != std::string::npos) {
      throw CheckpointError("metadata key may not contain '=': " + key);
    }
    put_name(std::string(kMetaPrefix) + key + "=" + value);
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint64_t>(out, 0);
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.starts_with(kMetaPrefix)) throw CheckpointError("reserved tensor name: " + name);
    put_name(name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : tensor.values()) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a parameter checkpoint (bad magic)");
  }
  Reader r(bytes);
  (void)r.string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  std::set<std::string> seen;
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.string(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("implausible tensor rank in " + name);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint64_t>());
    if (name.starts_with(kMetaPrefix)) {
      const auto eq = name.find('=');
      if (eq == std::string::npos || shape != Shape{0}) {
        throw CheckpointError("malformed metadata entry");
      }
      ckpt.meta[name.substr(kMetaPrefix.size(), eq - kMetaPrefix.size())] = name.substr(eq + 1);
      continue;
    }
    if (!seen.insert(name).second) throw CheckpointError("duplicate tensor " + name);
    Tensor t(shape);
    for (double& v : t.values()) v = std::bit_cast<float>(r.get<std::uint32_t>());
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError("write failed: " + path.string());
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}
}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(slurp(path)); }

void load_parameters(ParameterSet& params, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != params.tensors()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.tensors()));
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (!params.contains(name)) throw CheckpointError("unexpected tensor " + name);
    Parameter& p = params.get(name);
    if (p.value().shape() != tensor.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": " +
                            shape_to_string(tensor.shape()) + " vs " +
                            shape_to_string(p.value().shape()));
    }
    p.value() = tensor;
  }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return s;
}

}  // namespace sfus::nn
