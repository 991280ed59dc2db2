#include "sceneprior/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sceneprior {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'F', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw Error("truncated-checkpoint", "checkpoint ends after " + std::to_string(bytes_.size()) +
                                              " bytes, needed " + std::to_string(pos_ + n));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (ad::shape_size(t.shape) != t.values.size())
      throw Error("bad-shape", "tensor " + t.name + " has " + std::to_string(t.values.size()) +
                                   " values for shape " + ad::shape_str(t.shape));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t e : t.shape) put_le<std::uint64_t>(out, e);
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.get_string(4) != std::string(kMagic, 4))
    throw Error("bad-magic", "not a checkpoint (magic bytes differ from SPF1)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error("version-mismatch", "checkpoint version " + std::to_string(version) +
                                        ", expected " + std::to_string(kCheckpointVersion));
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.get<std::uint64_t>());
    const std::size_t n = ad::shape_size(t.shape);
    in.need(n * 8);
    t.values.resize(n);
    for (double& v : t.values) v = std::bit_cast<double>(in.get<std::uint64_t>());
    out.push_back(std::move(t));
  }
  if (in.remaining() != 0)
    throw Error("trailing-bytes", std::to_string(in.remaining()) + " bytes after last tensor");
  return out;
}

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("io", "failed writing " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

NamedTensor snapshot(const ad::ParamTensor& p) { return {p.name, p.shape, p.values}; }

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const NamedTensor& t) { return t.name == name; });
  if (it == tensors.end()) throw Error("missing-tensor", "checkpoint has no tensor " + name);
  return *it;
}

void restore(ad::ParamTensor& p, const NamedTensor& t) {
  if (t.shape != p.shape)
    throw Error("shape-mismatch", "tensor " + t.name + " stored as " + ad::shape_str(t.shape) +
                                      ", model expects " + ad::shape_str(p.shape));
  p.values = t.values;
}

}  // namespace sceneprior
