#include "genparse/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>
#include <vector>

namespace genparse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'P', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  void bytes(void* out, std::size_t n) {
    if (pos_ + n > size_) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

std::vector<unsigned char> read_verified(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw Error(path.string() + " is not a checkpoint file");
  }
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (crc_of(buf.data(), buf.size() - 4) != stored) {
    throw Error("checkpoint checksum mismatch in " + path.string());
  }
  buf.resize(buf.size() - 4);
  return buf;
}

std::string read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  return r.str();
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Real>& store,
                     const std::string& metadata_json) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(metadata_json);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter<Real>& p = store[i];
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    w.u8(sizeof(Real) == 8 ? 1 : 0);
    w.bytes(p.value.data(), p.value.size() * sizeof(Real));
  }
  auto& buf = w.buffer();
  const std::uint32_t crc = crc_of(buf.data(), buf.size());
  w.u32(crc);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Real>
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore<Real>& store) {
  const auto buf = read_verified(path);
  Reader r(buf.data(), buf.size());
  std::string metadata = read_header(r);
  const std::uint32_t count = r.u32();
  std::unordered_set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str();
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    const std::uint8_t dtype = r.u8();
    if (dtype > 1) throw Error("unknown dtype " + std::to_string(dtype) + " for " + name);
    Parameter<Real>& p = store.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw ShapeError("checkpoint tensor " + name + " has shape [" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "], model expects " + p.value.shape_string());
    }
    const std::size_t n = std::size_t(rows) * cols;
    if (dtype == 0) {
      std::vector<float> v(n);
      r.bytes(v.data(), n * sizeof(float));
      for (std::size_t i = 0; i < n; ++i) p.value[i] = static_cast<Real>(v[i]);
    } else {
      std::vector<double> v(n);
      r.bytes(v.data(), n * sizeof(double));
      for (std::size_t i = 0; i < n; ++i) p.value[i] = static_cast<Real>(v[i]);
    }
    seen.insert(name);
  }
  if (!r.done()) throw Error("trailing bytes in checkpoint " + path.string());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!seen.count(store[i].name)) throw Error("checkpoint lacks parameter " + store[i].name);
  }
  store.zero_grad();
  return metadata;
}

std::string read_checkpoint_metadata(const std::filesystem::path& path) {
  const auto buf = read_verified(path);
  Reader r(buf.data(), buf.size());
  return read_header(r);
}

template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&,
                              const std::string&);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&,
                              const std::string&);
template std::string load_checkpoint(const std::filesystem::path&, ParameterStore<float>&);
template std::string load_checkpoint(const std::filesystem::path&, ParameterStore<double>&);

}  // namespace genparse
