#include "sparsing/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "sparsing/io.hpp"

namespace sparsing {

static_assert(std::endian::native == std::endian::little,
              "SPLW encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'W'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw DataError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

std::vector<std::uint64_t> shape_of(const Mat<float>& m) {
  return {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
}
std::vector<std::uint64_t> shape_of(const Vec<float>& v) {
  return {static_cast<std::uint64_t>(v.size())};
}

struct Header {
  ModelConfig config;
  std::uint64_t tokens_seen = 0;
  std::uint64_t step = 0;
  std::vector<TensorEntry> manifest;
  std::size_t data_start = 0;
};

Header read_header(Reader& r) {
  r.need(4);
  if (std::memcmp(r.bytes.data(), kMagic, 4) != 0) throw DataError("not an SPLW checkpoint");
  r.pos = 4;
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported SPLW version " + std::to_string(version));
  }
  Header h;
  auto& c = h.config;
  c.d_h = static_cast<int>(r.get<std::uint32_t>());
  c.d_f = static_cast<int>(r.get<std::uint32_t>());
  c.n_layers = static_cast<int>(r.get<std::uint32_t>());
  c.n_heads = static_cast<int>(r.get<std::uint32_t>());
  c.vocab_size = static_cast<int>(r.get<std::uint32_t>());
  c.max_seq_len = static_cast<int>(r.get<std::uint32_t>());
  const auto act = r.get<std::uint32_t>();
  if (act > 1) throw DataError("unknown activation code in checkpoint");
  c.activation = static_cast<Activation>(act);
  c.seed = r.get<std::uint64_t>();
  c.validate();
  h.tokens_seen = r.get<std::uint64_t>();
  h.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    const auto len = r.get<std::uint32_t>();
    r.need(len);
    e.name.assign(reinterpret_cast<const char*>(r.bytes.data() + r.pos), len);
    r.pos += len;
    const auto ndim = r.get<std::uint32_t>();
    if (ndim == 0 || ndim > 2) throw DataError("tensor " + e.name + " has unsupported rank");
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(r.get<std::uint64_t>());
    e.offset = r.get<std::uint64_t>();
    h.manifest.push_back(std::move(e));
  }
  h.data_start = r.pos;
  return h;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  c.validate();
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  for (int v : {c.d_h, c.d_f, c.n_layers, c.n_heads, c.vocab_size, c.max_seq_len}) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.activation));
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint64_t>(ckpt.tokens_seen);
  w.put<std::uint64_t>(ckpt.step);

  std::vector<TensorEntry> manifest;
  std::vector<float> data;
  ckpt.weights.for_each_tensor([&](const std::string& name, const auto& t) {
    TensorEntry e{name, shape_of(t), data.size() * sizeof(float)};
    // row-major in the declared shape
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
    }
    manifest.push_back(std::move(e));
  });
  w.put<std::uint32_t>(static_cast<std::uint32_t>(manifest.size()));
  for (const auto& e : manifest) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(e.offset);
  }
  w.put_bytes(data.data(), data.size() * sizeof(float));
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  Header h = read_header(r);
  Checkpoint ckpt;
  ckpt.config = h.config;
  ckpt.tokens_seen = h.tokens_seen;
  ckpt.step = h.step;
  ckpt.weights = Weights<float>::zeros(h.config);

  std::size_t resolved = 0;
  ckpt.weights.for_each_tensor([&](const std::string& name, auto& t) {
    const TensorEntry* entry = nullptr;
    for (const auto& e : h.manifest) {
      if (e.name == name) entry = &e;
    }
    if (!entry) throw DataError("checkpoint is missing tensor " + name);
    if (entry->shape != shape_of(t)) throw DimensionError("tensor " + name + " has wrong shape");
    const std::size_t n = static_cast<std::size_t>(t.size());
    const std::size_t begin = h.data_start + entry->offset;
    if (begin + n * sizeof(float) > bytes.size()) throw DataError("tensor " + name + " truncated");
    const float* src = reinterpret_cast<const float*>(bytes.data() + begin);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        float v;
        std::memcpy(&v, src + k++, sizeof(float));
        t(i, j) = v;
      }
    }
    ++resolved;
  });
  if (resolved != h.manifest.size()) throw DataError("checkpoint has unexpected tensors");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_bytes(path));
}

std::vector<TensorEntry> read_manifest(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  Reader r(bytes);
  return read_header(r).manifest;
}

}  // namespace sparsing
