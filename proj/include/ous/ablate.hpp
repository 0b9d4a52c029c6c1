#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ous/config.hpp"

namespace ous {

// Grid axes. The default grid is the full cross product: 3 * 3 * 2 * 2 = 36
// settings per seed. A grid file may restrict any axis; entries must be
// unique and non-empty.
struct AblationAxes {
  std::vector<size_t> tfe_blocks{8, 12, 16};
  std::vector<size_t> prompt_length{16, 32, 64};
  std::vector<std::string> loss_strategy{"ce_only", "global"};
  std::vector<std::string> fusion{"tfe", "mean_pool"};

  void validate() const;
  size_t cells() const {
    return tfe_blocks.size() * prompt_length.size() * loss_strategy.size() * fusion.size();
  }
};

AblationAxes axes_from_json(const std::string& text);
AblationAxes load_axes(const std::string& path);

struct AblationRow {
  std::string setting_id;  // "b<blocks>_m<length>_<strategy>_<fusion>"
  size_t tfe_blocks = 0;
  size_t prompt_length = 0;
  std::string loss_strategy;
  std::string fusion;
  uint64_t seed = 0;
  double uar = 0.0;       // at the best-checkpoint epoch
  double war = 0.0;
  long best_epoch = 0;
  std::string status;     // "ok", "cached", or "failed: <reason>"
};

// Trains every (setting, seed) cell of the grid off `base`, writing each
// cell's artifacts under out_dir/cells/<setting_id>_s<seed>. Cells that
// already hold a result.json are not re-trained. Cell failures are recorded
// in the row's status and do not stop the grid. Frozen features are computed
// once per seed and shared by that seed's cells; OUS_THREADS caps the number
// of concurrent cell workers.
std::vector<AblationRow> run_ablation(const RunConfig& base, const Manifest& manifest,
                                      const std::string& corpus_dir, const AblationAxes& axes,
                                      const std::vector<uint64_t>& seeds,
                                      const std::string& out_dir,
                                      std::ostream* progress = nullptr);

// CSV with header setting_id, tfe_blocks, prompt_length, loss_strategy,
// fusion, seed, UAR, WAR, best_epoch, status.
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace ous
