#pragma once

#include <string>
#include <vector>

#include "ous/modules.hpp"

namespace ous {

// Named-parameter archive. File layout (little-endian):
//   "OUSK" | u32 version | u32 param count |
//   per param: u16 name length, UTF-8 name, u8 dtype (0=f32, 1=f64),
//              u8 rank, u32 dims[rank], raw payload |
//   UTF-8 JSON trailer | u64 trailer length.
// Entries are unique and lexicographically ordered by name; the trailer
// carries the run-config echo, the epoch, and the validation loss. The raw
// trailer bytes are preserved so save(load(f)) reproduces f exactly.
struct CheckpointEntry {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::vector<CheckpointEntry> params;
  std::string trailer;
};

// Trailer fields, parsed on demand.
struct CheckpointInfo {
  std::string config_json;  // run-config echo, compact JSON
  long epoch = 0;
  double val_loss = 0.0;
};

// Snapshots every parameter (frozen included) so the archive can rebuild the
// model without replaying initialization.
Checkpoint make_checkpoint(const ParamList& params, const std::string& config_json, long epoch,
                           double val_loss);

CheckpointInfo checkpoint_info(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Installs the archived values into `params`. The shape census must match
// exactly; the first mismatch in name order (missing, extra, or wrong
// shape/dtype) is named in the error.
void restore_params(const ParamList& params, const Checkpoint& ckpt);

}  // namespace ous
