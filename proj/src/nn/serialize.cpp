#include "demark/nn/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "demark/core/error.hpp"

namespace demark::nn {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'M', 'R', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : buf_(b), end_(end) {}
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(ErrorKind::Format, "model file truncated");
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_model(const ModelGraph& model) {
  if (model.layers().empty()) throw Error(ErrorKind::Format, "refusing to save a model with zero layers");
  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kModelFormatVersion);
  w.uint<std::uint64_t>(model.input_dim());
  w.f64(model.input_scale());
  w.f64(model.output_scale());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& l : model.layers()) {
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(l.spec.kind));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(l.spec.activation));
    w.uint<std::uint64_t>(l.spec.units);
    w.uint<std::uint64_t>(l.spec.kernel_size);
    w.uint<std::uint64_t>(l.spec.stride);
  }
  for (const auto& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) w.f64(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) w.f64(l.bias.data()[i]);
  }
  auto& buf = w.buffer();
  w.uint<std::uint64_t>(fnv1a64(buf.data(), buf.size()));
  return std::move(buf);
}

ModelGraph decode_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw Error(ErrorKind::Format, "model file truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorKind::Format, "bad magic, not a DMRK model");
  const std::size_t body = bytes.size() - 8;
  Reader trailer(bytes, bytes.size());
  Reader r(bytes, body);
  r.need(4);
  (void)r.uint<std::uint32_t>();  // magic, already checked
  const auto version = r.uint<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::Format, "unsupported model format version " + std::to_string(version));
  }
  {
    std::uint64_t stored = 0;
    for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
    if (stored != fnv1a64(bytes.data(), body)) throw Error(ErrorKind::Format, "model checksum mismatch");
  }
  const auto input_dim = r.uint<std::uint64_t>();
  const double in_scale = r.f64();
  const double out_scale = r.f64();
  const auto count = r.uint<std::uint32_t>();
  if (count == 0 || count > 4096) throw Error(ErrorKind::Format, "implausible layer count");
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec s;
    const auto kind = r.uint<std::uint8_t>();
    const auto act = r.uint<std::uint8_t>();
    if (kind > 1 || act > 3) throw Error(ErrorKind::Format, "unknown layer kind or activation");
    s.kind = static_cast<LayerKind>(kind);
    s.activation = static_cast<Activation>(act);
    s.units = r.uint<std::uint64_t>();
    s.kernel_size = r.uint<std::uint64_t>();
    s.stride = r.uint<std::uint64_t>();
    specs.push_back(s);
  }
  ModelGraph model;
  try {
    model = ModelGraph::from_parts(input_dim, specs, in_scale, out_scale);
  } catch (const Error& e) {
    throw Error(ErrorKind::Format, std::string("inconsistent layer table: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& l : model.layers()) expected += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  r.need(expected * 8);
  for (auto& l : model.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = r.f64();
  }
  if (r.pos() != body) throw Error(ErrorKind::Format, "trailing bytes after weight blob");
  return model;
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

ModelGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

std::string model_checksum(const ModelGraph& model) {
  const auto bytes = encode_model(model);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return hex;
}

}  // namespace demark::nn
