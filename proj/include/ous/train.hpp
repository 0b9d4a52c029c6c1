#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ous/config.hpp"
#include "ous/model.hpp"

namespace ous {

// One metrics record per optimizer step. L_global is the value actually sent
// backward: the three-term sum while the gate is active, the contrastive term
// alone otherwise. The next step's gate compares against this value.
struct StepRecord {
  long step = 0;     // 1-based, global across epochs
  size_t epoch = 0;  // 1-based
  double L_polarity = 0.0;
  double L_similarity = 0.0;
  double L_contrast = 0.0;
  double L_global = 0.0;
  bool gate_active = false;
  double lr = 0.0;
};

struct EpochRecord {
  size_t epoch = 0;
  double train_acc = 0.0;  // running accuracy over the epoch's training batches
  double val_loss = 0.0;
  double val_uar = 0.0;
  double val_war = 0.0;
  double lr = 0.0;                 // rate in effect during the epoch
  std::vector<std::string> flags;  // subset of {"decayed", "converged", "overfit"}
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  size_t best_epoch = 0;  // epoch of the saved best checkpoint, 0 if none
  double best_val_loss = 0.0;
  bool aborted = false;      // a step produced a non-finite value
  std::string abort_reason;  // names the offending step
};

// Runs the training protocol over cached frozen features and writes
// best.ckpt (lowest validation loss), last.ckpt, and metrics.jsonl under
// out_dir. config_echo is the run-config JSON embedded in both checkpoints.
// progress, when non-null, receives one line per epoch.
TrainResult train_model(Model& model, const FeatureCache& cache, const Manifest& manifest,
                        const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& config_echo, std::ostream* progress = nullptr);

}  // namespace ous
