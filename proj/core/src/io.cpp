#include "lrf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lrf {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'C', 'T'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& path, std::string bytes)
      : path_(path), bytes_(std::move(bytes)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  void raw(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(path_ + ": truncated tensor file");
    }
  }
  std::string path_;
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_tensor_file(const std::string& path,
                       const std::vector<std::uint32_t>& dims,
                       const std::vector<double>& values, ScalarType type) {
  std::size_t expected = 1;
  for (std::uint32_t d : dims) expected *= d;
  if (dims.empty() || expected != values.size()) {
    throw DimensionError("write_tensor_file: dims do not match payload length");
  }
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kTensorFileVersion);
  out.push_back(static_cast<char>(type));
  out.push_back(static_cast<char>(dims.size()));
  for (std::uint32_t d : dims) put_u32(out, d);
  if (type == ScalarType::f32) {
    for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("write_tensor_file: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("write_tensor_file: write failed for " + path);
}

TensorData read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_tensor_file: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  Reader r(path, std::move(bytes));

  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, not a tensor file");
  }
  const std::uint16_t version = r.u16();
  if (version != kTensorFileVersion) {
    throw FormatError(path + ": unsupported format version");
  }
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw FormatError(path + ": unknown scalar type tag");
  const std::uint8_t rank = r.u8();
  if (rank == 0) throw FormatError(path + ": zero-rank tensor");

  TensorData t;
  t.stored = static_cast<ScalarType>(tag);
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0) throw FormatError(path + ": zero dimension");
    t.dims.push_back(d);
    count *= d;
  }
  t.values.resize(count);
  if (t.stored == ScalarType::f32) {
    for (std::size_t i = 0; i < count; ++i)
      t.values[i] = static_cast<double>(std::bit_cast<float>(r.u32()));
  } else {
    for (std::size_t i = 0; i < count; ++i)
      t.values[i] = std::bit_cast<double>(r.u64());
  }
  if (!r.exhausted()) throw FormatError(path + ": trailing bytes after payload");
  return t;
}

void write_kernel(const std::string& path, const KernelTensor& w, ScalarType type) {
  write_tensor_file(path,
                    {static_cast<std::uint32_t>(w.input_channels()),
                     static_cast<std::uint32_t>(w.kernel_height()),
                     static_cast<std::uint32_t>(w.kernel_width()),
                     static_cast<std::uint32_t>(w.output_channels())},
                    w.data(), type);
}

KernelTensor read_kernel(const std::string& path) {
  TensorData t = read_tensor_file(path);
  if (t.dims.size() != 4) {
    throw FormatError(path + ": kernel file must have rank 4");
  }
  return KernelTensor(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                      static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]),
                      std::move(t.values));
}

void write_feature_map(const std::string& path, const FeatureMap& z, ScalarType type) {
  write_tensor_file(path,
                    {static_cast<std::uint32_t>(z.channels()),
                     static_cast<std::uint32_t>(z.height()),
                     static_cast<std::uint32_t>(z.width())},
                    z.data(), type);
}

FeatureMap read_feature_map(const std::string& path) {
  TensorData t = read_tensor_file(path);
  if (t.dims.size() != 3) {
    throw FormatError(path + ": feature-map file must have rank 3");
  }
  return FeatureMap(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                    static_cast<int>(t.dims[2]), std::move(t.values));
}

void write_factor_pair(const std::string& v_path, const std::string& h_path,
                       const FactorPair& f, ScalarType type) {
  const int k = f.rank(), c = f.input_channels(), n = f.output_channels(),
            d = f.filter_length();
  std::vector<double> v(static_cast<std::size_t>(k) * d * c);
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < d; ++j)
      for (int cc = 0; cc < c; ++cc)
        v[(static_cast<std::size_t>(kk) * d + j) * c + cc] = f.v(kk, cc, j);
  write_tensor_file(v_path,
                    {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(d), 1,
                     static_cast<std::uint32_t>(c)},
                    v, type);

  std::vector<double> h(static_cast<std::size_t>(n) * d * k);
  for (int nn = 0; nn < n; ++nn)
    for (int j = 0; j < d; ++j)
      for (int kk = 0; kk < k; ++kk)
        h[(static_cast<std::size_t>(nn) * d + j) * k + kk] = f.h(nn, kk, j);
  write_tensor_file(h_path,
                    {static_cast<std::uint32_t>(n), 1, static_cast<std::uint32_t>(d),
                     static_cast<std::uint32_t>(k)},
                    h, type);
}

FactorPair read_factor_pair(const std::string& v_path, const std::string& h_path) {
  TensorData vt = read_tensor_file(v_path);
  TensorData ht = read_tensor_file(h_path);
  if (vt.dims.size() != 4 || vt.dims[2] != 1) {
    throw FormatError(v_path + ": vertical filter file must have dims (K, d, 1, C)");
  }
  if (ht.dims.size() != 4 || ht.dims[1] != 1) {
    throw FormatError(h_path + ": horizontal filter file must have dims (N, 1, d, K)");
  }
  const int k = static_cast<int>(vt.dims[0]);
  const int d = static_cast<int>(vt.dims[1]);
  const int c = static_cast<int>(vt.dims[3]);
  const int n = static_cast<int>(ht.dims[0]);
  if (static_cast<int>(ht.dims[2]) != d || static_cast<int>(ht.dims[3]) != k) {
    throw DimensionError("read_factor_pair: V and H disagree on d or K");
  }
  FactorPair f(k, c, n, d);
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < d; ++j)
      for (int cc = 0; cc < c; ++cc)
        f.v(kk, cc, j) = vt.values[(static_cast<std::size_t>(kk) * d + j) * c + cc];
  for (int nn = 0; nn < n; ++nn)
    for (int j = 0; j < d; ++j)
      for (int kk = 0; kk < k; ++kk)
        f.h(nn, kk, j) = ht.values[(static_cast<std::size_t>(nn) * d + j) * k + kk];
  return f;
}

}  // namespace lrf
