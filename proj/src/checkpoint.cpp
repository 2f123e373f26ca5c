#include "ignn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "ignn/error.hpp"

namespace ignn {
namespace {

constexpr char kMagic[4] = {'I', 'G', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof bytes);
}

void put_double(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

template <class T>
bool get(std::istream& in, T& v) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof bytes);
  if (in.gcount() != static_cast<std::streamsize>(sizeof bytes)) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return true;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  for (const NamedTensor& t : tensors) {
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) throw ShapeError("checkpoint tensor '" + t.name + "': dims do not match data");
    put<std::uint64_t>(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(out, t.dims.size());
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    for (double v : t.data) put_double(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path + ": not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  if (!get(in, version)) throw ParseError(path + ": truncated header");
  if (version != kVersion) throw ParseError(path + ": unsupported version " + std::to_string(version));

  std::vector<NamedTensor> out;
  for (;;) {
    std::uint64_t name_len = 0;
    if (!get(in, name_len)) break;
    if (name_len > (1u << 20)) throw ParseError(path + ": implausible tensor name length");
    NamedTensor t;
    t.name.resize(name_len);
    in.read(t.name.data(), static_cast<std::streamsize>(name_len));
    std::uint64_t rank = 0;
    if (in.gcount() != static_cast<std::streamsize>(name_len) || !get(in, rank) || rank > 8) {
      throw ParseError(path + ": truncated or corrupt tensor header");
    }
    std::uint64_t count = 1;
    t.dims.resize(rank);
    for (auto& d : t.dims) {
      if (!get(in, d)) throw ParseError(path + ": truncated dims for '" + t.name + "'");
      count *= d;
    }
    if (count > (1ull << 32)) throw ParseError(path + ": implausible tensor size for '" + t.name + "'");
    t.data.resize(count);
    for (double& v : t.data) {
      std::uint64_t bits = 0;
      if (!get(in, bits)) throw ParseError(path + ": truncated payload for '" + t.name + "'");
      v = std::bit_cast<double>(bits);
    }
    out.push_back(std::move(t));
  }
  return out;
}

NamedTensor tensor_from(const std::string& name, const Matrix& m) {
  return NamedTensor{name, {m.rows(), m.cols()}, std::vector<double>(m.values().begin(), m.values().end())};
}

NamedTensor scalar_tensor(const std::string& name, double value) { return NamedTensor{name, {}, {value}}; }

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw ParseError("checkpoint has no tensor '" + name + "'");
}

Matrix matrix_from(const std::vector<NamedTensor>& tensors, const std::string& name) {
  const NamedTensor& t = find_tensor(tensors, name);
  if (t.dims.size() != 2) throw ParseError("checkpoint tensor '" + name + "' is not a matrix");
  return Matrix(t.dims[0], t.dims[1], t.data);
}

double scalar_from(const std::vector<NamedTensor>& tensors, const std::string& name) {
  const NamedTensor& t = find_tensor(tensors, name);
  if (!t.dims.empty()) throw ParseError("checkpoint tensor '" + name + "' is not a scalar");
  return t.data.at(0);
}

}  // namespace ignn
