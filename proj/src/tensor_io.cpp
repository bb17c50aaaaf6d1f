#include "ctcn/tensor_io.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ctcn {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'T', 'C', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(fmt::format("truncated container while reading {}", what));
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), 8, "payload");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return std::bit_cast<double>(v);
}

}  // namespace

void write_container(std::ostream& out, const std::vector<NamedTensor>& records) {
  out.write(kMagic.data(), 4);
  put_u32(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.tensor.rank()));
    for (auto e : r.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (Eigen::Index i = 0; i < r.tensor.values().size(); ++i) put_f64(out, r.tensor.values()[i]);
  }
  if (!out) throw FormatError("failed writing container");
}

std::vector<NamedTensor> read_container(std::istream& in) {
  std::array<char, 4> magic{};
  read_exact(in, magic.data(), 4, "magic");
  if (magic != kMagic) throw FormatError("not a CTCN container (bad magic)");
  const auto version = get_u32(in, "version");
  if (version != kContainerVersion)
    throw FormatError(fmt::format("unsupported CTCN container version {} (expected {})", version, kContainerVersion));
  const auto count = get_u32(in, "record count");
  std::vector<NamedTensor> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto len = get_u32(in, "name length");
    std::string name(len, '\0');
    read_exact(in, name.data(), len, "name");
    const auto rank = get_u32(in, "rank");
    if (rank == 0) throw FormatError(fmt::format("record '{}' has rank 0", name));
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(get_u32(in, "extent"));
    for (auto e : shape)
      if (e == 0) throw FormatError(fmt::format("record '{}' has a zero extent", name));
    Eigen::VectorXd values(static_cast<Eigen::Index>(shape_size(shape)));
    for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = get_f64(in);
    records.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return records;
}

void save_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_container(out, records);
}

std::vector<NamedTensor> load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_container(in);
}

const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return r.tensor;
  throw FormatError("container has no record named '" + name + "'");
}

}  // namespace ctcn
