#pragma once

#include "texmatch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace texmatch {

template <typename Scalar>
class ParameterStore;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> payload;  ///< little-endian element bytes

  std::int64_t numel() const;
};

/// Named-tensor manifest with a metadata block.
///
/// Binary layout (all integers little-endian):
///
///     magic      8 bytes  "TXMCKPT\0"
///     version    u32      = 1
///     meta_len   u32      byte length of the metadata text
///     meta       bytes    UTF-8 "key=value\n" lines, keys sorted
///     count      u32      number of tensors
///     per tensor:
///       name_len u32, name bytes
///       dtype    u8       1 = float32, 2 = float64
///       rank     u32, extents u64 x rank
///       payload  numel x sizeof(dtype) bytes, IEEE-754 little-endian
///
/// Tensors appear in model registration order.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

enum class LoadScope { all, encoder_only };

template <typename Scalar>
Checkpoint make_checkpoint(const ParameterStore<Scalar>& store, std::map<std::string, std::string> metadata);

/// Copies checkpoint values into `store`. Every targeted store entry must be
/// present with an identical shape; with LoadScope::all the name sets must match
/// exactly. Entries outside the scope are left untouched.
template <typename Scalar>
void load_into(const Checkpoint& checkpoint, ParameterStore<Scalar>& store, LoadScope scope);

template <typename Scalar>
Array<Scalar> decode_values(const CheckpointTensor& tensor);

}  // namespace texmatch
