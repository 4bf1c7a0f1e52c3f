#include "texmatch/checkpoint.hpp"

#include "texmatch/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace texmatch {

namespace {

constexpr char kMagic[8] = {'T', 'X', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void integer(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void string(const std::string& s) {
    integer<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  const std::uint8_t* bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint truncated");
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T integer() {
    const std::uint8_t* p = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
  }
  std::string string() {
    const auto n = integer<std::uint32_t>();
    const auto* p = bytes(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  throw CheckpointError("unknown dtype code " + std::to_string(static_cast<int>(d)));
}

template <typename Scalar>
constexpr DType dtype_of() {
  return sizeof(Scalar) == 4 ? DType::f32 : DType::f64;
}

template <typename Scalar>
std::vector<std::uint8_t> encode_values(const Array<Scalar>& values) {
  using Bits = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(values.size()) * sizeof(Scalar));
  for (Index i = 0; i < values.size(); ++i) {
    const Bits bits = std::bit_cast<Bits>(values[i]);
    for (std::size_t b = 0; b < sizeof(Bits); ++b) out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

template <typename Element>
Element decode_one(const std::uint8_t* p) {
  using Bits = std::conditional_t<sizeof(Element) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t b = 0; b < sizeof(Bits); ++b) bits |= static_cast<Bits>(static_cast<Bits>(p[b]) << (8 * b));
  return std::bit_cast<Element>(bits);
}

bool in_scope(const std::string& name, LoadScope scope) {
  return scope == LoadScope::all || name.rfind("encoder.", 0) == 0;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace

std::int64_t CheckpointTensor::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.integer<std::uint32_t>(kVersion);
  std::string meta;
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata key/value contains a reserved character: " + k);
    }
    meta += k + "=" + v + "\n";
  }
  w.string(meta);
  w.integer<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.string(t.name);
    w.integer<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.integer<std::uint64_t>(static_cast<std::uint64_t>(d));
    if (t.payload.size() != static_cast<std::size_t>(t.numel()) * dtype_size(t.dtype)) {
      throw CheckpointError("payload size mismatch for " + t.name);
    }
    w.bytes(t.payload.data(), t.payload.size());
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = r.integer<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  std::istringstream meta(r.string());
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed metadata line: " + line);
    ck.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.integer<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.string();
    t.dtype = static_cast<DType>(r.integer<std::uint8_t>());
    const auto rank = r.integer<std::uint32_t>();
    for (std::uint32_t a = 0; a < rank; ++a) t.shape.push_back(static_cast<std::int64_t>(r.integer<std::uint64_t>()));
    const std::size_t n = static_cast<std::size_t>(t.numel()) * dtype_size(t.dtype);
    const auto* p = r.bytes(n);
    t.payload.assign(p, p + n);
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <typename Scalar>
Array<Scalar> decode_values(const CheckpointTensor& t) {
  const auto n = static_cast<Index>(t.numel());
  Array<Scalar> out(n);
  const std::size_t width = dtype_size(t.dtype);
  for (Index i = 0; i < n; ++i) {
    const std::uint8_t* p = t.payload.data() + static_cast<std::size_t>(i) * width;
    out[i] = t.dtype == DType::f32 ? static_cast<Scalar>(decode_one<float>(p)) : static_cast<Scalar>(decode_one<double>(p));
  }
  return out;
}

template <typename Scalar>
Checkpoint make_checkpoint(const ParameterStore<Scalar>& store, std::map<std::string, std::string> metadata) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto& e : store.entries()) {
    CheckpointTensor t;
    t.name = e.name;
    t.dtype = dtype_of<Scalar>();
    for (Index d : e.tensor.shape().dims()) t.shape.push_back(d);
    t.payload = encode_values(e.tensor.value());
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename Scalar>
void load_into(const Checkpoint& checkpoint, ParameterStore<Scalar>& store, LoadScope scope) {
  // Validate everything before touching the store.
  for (const auto& e : store.entries()) {
    if (!in_scope(e.name, scope)) continue;
    const CheckpointTensor* t = checkpoint.find(e.name);
    if (!t) throw CheckpointError("checkpoint lacks tensor '" + e.name + "'");
    std::vector<std::int64_t> expected(e.tensor.shape().dims().begin(), e.tensor.shape().dims().end());
    if (t->shape != expected) {
      throw CheckpointError("shape mismatch for '" + e.name + "': checkpoint " + shape_str(t->shape) + ", model " +
                            shape_str(expected));
    }
  }
  for (const auto& t : checkpoint.tensors) {
    if (in_scope(t.name, scope) && !store.contains(t.name)) {
      throw CheckpointError("checkpoint tensor '" + t.name + "' has no counterpart in the model");
    }
  }
  for (const auto& e : store.entries()) {
    if (!in_scope(e.name, scope)) continue;
    Tensor<Scalar> target = e.tensor;
    target.mutable_value() = decode_values<Scalar>(*checkpoint.find(e.name));
  }
}

#define TEXMATCH_INSTANTIATE(S)                                                                         \
  template Array<S> decode_values<S>(const CheckpointTensor&);                                           \
  template Checkpoint make_checkpoint(const ParameterStore<S>&, std::map<std::string, std::string>);     \
  template void load_into(const Checkpoint&, ParameterStore<S>&, LoadScope);

TEXMATCH_INSTANTIATE(float)
TEXMATCH_INSTANTIATE(double)

#undef TEXMATCH_INSTANTIATE

}  // namespace texmatch
