#ifndef BSODA_NN_CHECKPOINT_HPP
#define BSODA_NN_CHECKPOINT_HPP

#include <filesystem>
#include <map>
#include <string>

#include "bsoda/nn/params.hpp"

namespace bsoda::nn {

/// Binary named-tensor container, all integers little-endian:
///
///   "BSDT" | u32 version | u32 count |
///   count x ( u32 name_len | name | u32 rows | u32 cols | rows*cols f32 )
///
/// Tensors are written in name order, so equal stores give equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::map<std::string, Tensor2>;

std::string encode_tensors(const NamedTensors& tensors);
NamedTensors decode_tensors(std::string_view bytes);

void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_tensors(const std::filesystem::path& path);

NamedTensors tensors_of(const ParamStore& store);
/// Every tensor must match an existing parameter by name and shape.
void assign_tensors(ParamStore& store, const NamedTensors& tensors);

}  // namespace bsoda::nn

#endif  // BSODA_NN_CHECKPOINT_HPP
