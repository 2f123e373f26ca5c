#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ignn/tensor.hpp"

namespace ignn {

/// Named tensor in the checkpoint container. Rank 0 holds one scalar.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

/// Little-endian container: "IGNN", u32 version, then per tensor
/// u64 name length, name bytes, u64 rank, u64 dims, f64 payload.
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

NamedTensor tensor_from(const std::string& name, const Matrix& m);
NamedTensor scalar_tensor(const std::string& name, double value);

/// Lookup helpers; missing names or wrong ranks raise a parse error.
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
Matrix matrix_from(const std::vector<NamedTensor>& tensors, const std::string& name);
double scalar_from(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace ignn
