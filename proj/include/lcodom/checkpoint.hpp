#pragma once

// Binary checkpoint container. Layout (all integers and floats little-endian):
//
//   char[8]   magic "LCODCKPT"
//   u32       format version (1)
//   u64       metadata length, then that many bytes of UTF-8 key = value text
//   u64       parameter-store seed
//   u32       parameter count P
//   P times:  u32 name length, name bytes, u32 rank, u64 dims[rank],
//             f32 values[prod(dims)]
//   u8        1 if optimizer state follows, else 0
//   if 1:     u64 step, f64 lr, f64 beta1, f64 beta2, f64 epsilon,
//             then per parameter in the same order: f32 m[...], f32 v[...]
//
// docs/checkpoint_format.md carries the same description.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lcodom/adam.hpp"
#include "lcodom/params.hpp"

namespace lcodom {

inline constexpr char kCheckpointMagic[8] = {'L', 'C', 'O', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerSnapshot {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Tensor32> m;
  std::vector<Tensor32> v;
};

struct Checkpoint {
  std::string metadata;
  ParamStore<float> params;
  std::optional<OptimizerSnapshot> optimizer;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

OptimizerSnapshot snapshot(const Adam<float>& adam);
Adam<float> restore_adam(const OptimizerSnapshot& snapshot);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lcodom
