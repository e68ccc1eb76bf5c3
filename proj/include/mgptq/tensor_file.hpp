#pragma once

// Minimal named-section tensor container.
//
// Layout (all integers little-endian):
//   "MGQT"            4 bytes magic
//   version           u8 (= 1)
//   section count     u16
//   per section:
//     name length     u8, followed by that many UTF-8 bytes
//     dtype           u8 (0 = f32, 1 = f64, 2 = u8)
//     ndim            u8
//     dims            u64 × ndim
//     payload         product(dims) × dtype size bytes, row-major
//
// Payloads are kept as raw bytes, so read → write reproduces a file exactly.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "mgptq/error.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

static_assert(std::endian::native == std::endian::little,
              "tensor files are read and written with little-endian payload copies");

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw FormatError("unknown dtype " + std::to_string(static_cast<int>(t)));
}

inline const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else {
    static_assert(std::is_same_v<T, std::uint8_t>, "unsupported tensor element type");
    return DType::u8;
  }
}

struct Tensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  template <typename T>
  static Tensor from_values(std::string name, std::vector<std::uint64_t> dims,
                            std::span<const T> values) {
    Tensor t;
    t.name = std::move(name);
    t.dtype = dtype_of<T>();
    t.dims = std::move(dims);
    if (t.element_count() != values.size())
      throw DimensionError("tensor '" + t.name + "': " + std::to_string(values.size()) +
                           " values do not match its dims");
    t.payload.resize(values.size() * sizeof(T));
    if (!values.empty()) std::memcpy(t.payload.data(), values.data(), t.payload.size());
    return t;
  }

  template <Real T>
  static Tensor from_matrix(std::string name, const Matrix<T>& m) {
    return from_values<T>(std::move(name), {m.rows(), m.cols()}, std::span<const T>(m.data()));
  }

  template <typename T>
  static Tensor from_vector(std::string name, const std::vector<T>& v) {
    return from_values<T>(std::move(name), {v.size()}, std::span<const T>(v));
  }

  static Tensor scalar(std::string name, double v) {
    return from_values<double>(std::move(name), {}, std::span<const double>(&v, 1));
  }

  // Every element widened to double; non-finite floats are rejected.
  std::vector<double> to_doubles() const {
    const std::size_t n = static_cast<std::size_t>(element_count());
    std::vector<double> out(n);
    switch (dtype) {
      case DType::f32:
        for (std::size_t i = 0; i < n; ++i) {
          float v;
          std::memcpy(&v, payload.data() + 4 * i, 4);
          out[i] = v;
        }
        break;
      case DType::f64:
        if (n) std::memcpy(out.data(), payload.data(), 8 * n);
        break;
      case DType::u8:
        for (std::size_t i = 0; i < n; ++i) out[i] = payload[i];
        break;
    }
    if (dtype != DType::u8)
      for (double v : out)
        if (!std::isfinite(v)) throw FormatError("section '" + name + "' contains a non-finite value");
    return out;
  }

  template <Real T>
  Matrix<T> to_matrix() const {
    if (dims.size() != 2)
      throw FormatError("section '" + name + "' is not a matrix (ndim " +
                        std::to_string(dims.size()) + ")");
    const auto values = to_doubles();
    std::vector<T> data(values.begin(), values.end());
    return Matrix<T>(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                     std::move(data));
  }

  double to_scalar() const {
    if (element_count() != 1) throw FormatError("section '" + name + "' is not a scalar");
    return to_doubles()[0];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class TensorFile {
 public:
  static constexpr std::array<char, 4> kMagic{'M', 'G', 'Q', 'T'};
  static constexpr std::uint8_t kVersion = 1;

  void add(Tensor t) {
    if (t.name.size() > 255) throw ValidationError("section name longer than 255 bytes: " + t.name);
    if (t.dims.size() > 255) throw ValidationError("too many dims in section " + t.name);
    if (contains(t.name)) throw ValidationError("duplicate section name '" + t.name + "'");
    if (sections_.size() >= std::numeric_limits<std::uint16_t>::max())
      throw ValidationError("too many sections");
    if (t.payload.size() != t.element_count() * dtype_size(t.dtype))
      throw ValidationError("section '" + t.name + "' payload size does not match its dims");
    sections_.push_back(std::move(t));
  }

  bool contains(std::string_view name) const {
    return std::any_of(sections_.begin(), sections_.end(),
                       [&](const Tensor& t) { return t.name == name; });
  }

  const Tensor& get(std::string_view name) const {
    for (const auto& t : sections_)
      if (t.name == name) return t;
    throw FormatError("missing section '" + std::string(name) + "'");
  }

  const std::vector<Tensor>& sections() const noexcept { return sections_; }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    put_le(out, static_cast<std::uint16_t>(sections_.size()));
    for (const auto& t : sections_) {
      out.push_back(static_cast<std::uint8_t>(t.name.size()));
      out.insert(out.end(), t.name.begin(), t.name.end());
      out.push_back(static_cast<std::uint8_t>(t.dtype));
      out.push_back(static_cast<std::uint8_t>(t.dims.size()));
      for (auto d : t.dims) put_le(out, d);
      out.insert(out.end(), t.payload.begin(), t.payload.end());
    }
    return out;
  }

  static TensorFile parse(std::span<const std::uint8_t> bytes) {
    Reader in{bytes};
    std::array<char, 4> magic{};
    for (char& c : magic) c = static_cast<char>(in.u8());
    if (magic != kMagic) throw FormatError("bad magic: not an MGQT tensor file");
    const auto version = in.u8();
    if (version != kVersion)
      throw FormatError("unsupported tensor file version " + std::to_string(version));
    const auto count = in.template le<std::uint16_t>();
    TensorFile f;
    for (std::uint16_t s = 0; s < count; ++s) {
      Tensor t;
      const auto name_len = in.u8();
      const auto name_bytes = in.take(name_len);
      t.name.assign(name_bytes.begin(), name_bytes.end());
      const auto dtype = in.u8();
      if (dtype > static_cast<std::uint8_t>(DType::u8))
        throw FormatError("section '" + t.name + "' has unknown dtype " + std::to_string(dtype));
      t.dtype = static_cast<DType>(dtype);
      const auto ndim = in.u8();
      std::uint64_t elems = 1;
      for (std::uint8_t d = 0; d < ndim; ++d) {
        const auto dim = in.template le<std::uint64_t>();
        if (dim != 0 && elems > std::numeric_limits<std::uint64_t>::max() / dim)
          throw FormatError("section '" + t.name + "' dims overflow");
        elems *= dim;
        t.dims.push_back(dim);
      }
      const std::uint64_t size = dtype_size(t.dtype);
      if (elems > in.remaining() / size)
        throw FormatError("section '" + t.name + "' is truncated");
      const auto payload = in.take(static_cast<std::size_t>(elems * size));
      t.payload.assign(payload.begin(), payload.end());
      if (f.contains(t.name)) throw FormatError("duplicate section name '" + t.name + "'");
      f.sections_.push_back(std::move(t));
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after the last section");
    return f;
  }

  static TensorFile read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    try {
      return parse(bytes);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }

  // Writes to a sibling temporary file and renames it into place.
  void write(const std::filesystem::path& path) const { write_atomic(path, serialize()); }

 private:
  struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    std::size_t remaining() const { return bytes.size() - pos; }
    std::span<const std::uint8_t> take(std::size_t n) {
      if (n > remaining()) throw FormatError("unexpected end of file");
      auto s = bytes.subspan(pos, n);
      pos += n;
      return s;
    }
    std::uint8_t u8() { return take(1)[0]; }
    template <typename U>
    U le() {
      const auto s = take(sizeof(U));
      U v = 0;
      for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
      return v;
    }
  };

  template <typename U>
  static void put_le(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<Tensor> sections_;

 public:
  static void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw ValidationError("cannot write '" + tmp.string() + "'");
      os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!os) throw ValidationError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ValidationError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
};

}  // namespace mgptq
