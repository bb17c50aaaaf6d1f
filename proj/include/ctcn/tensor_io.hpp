#pragma once

#include "ctcn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

// CTCN container layout, all integers little-endian:
//   "CTCN" | u32 version | u32 record count |
//   per record: u32 name length | name bytes | u32 rank | u32 extent * rank |
//               f64 payload, row-major
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_container(std::ostream& out, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_container(std::istream& in);

void save_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_container(const std::filesystem::path& path);

/// Looks up a record by name; throws FormatError when absent.
const Tensor& find_record(const std::vector<NamedTensor>& records, const std::string& name);

}  // namespace ctcn
