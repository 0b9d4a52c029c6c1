#pragma once

#include <limits>
#include <unordered_map>
#include <vector>

#include "ous/tape.hpp"

namespace ous {

// Mean cross-entropy of integer labels under raw logits [B, K].
Var cross_entropy(Var logits, const std::vector<int>& labels);

// 3-way scene-polarity head loss: mean CE over logits [B, 3].
Var polarity_loss(Var logits, const std::vector<int>& labels);

// Alignment loss between the two stream features: mean over rows of
// (1 - cos(a_i, b_i)). Row norms carry a small additive guard, so zero rows
// behave as "orthogonal" instead of dividing by zero. Range [0, 2].
Var similarity_loss(Var a, Var b, double guard = 1e-12);

// InfoNCE over a fixed candidate set. anchors [B, D] are normalized here;
// candidate rows [K, D] must already be unit-norm. positive[b] indexes each
// anchor's true candidate; temperature is exp(log_tau).
Var contrastive_loss(Tape& t, Var anchors, Var candidates, Var log_tau,
                     const std::vector<int>& positive);

struct GateConfig {
  // The three-term sum is used while the previous step's global loss is
  // above this; afterwards the contrastive term trains alone. Sits above
  // ln 7 ~ 1.946, the 7-class contrastive floor, so the gate only closes
  // once real progress is made.
  double alpha = 2.0;
};

struct GatedLoss {
  Var loss;                 // composition used for backward
  bool gate_active = true;  // true -> loss is polarity + similarity + contrast
};

// Gated composition. prev_global is the logged global loss of the previous
// step; pass +infinity on the first step so training starts with the sum.
GatedLoss global_loss(Var polarity, Var similarity, Var contrast,
                      const GateConfig& gate, double prev_global);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer. Moments are kept in float64 and keyed by
// parameter identity; updates are computed in float64 and rounded into the
// parameter's dtype. Each step installs a fresh value buffer: tensors already
// recorded on a tape keep the values they saw.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over every trainable parameter. Frozen parameters are
  // untouched. Gradients are read as-is; zeroing between steps is the
  // caller's job.
  void step(const std::vector<ParamPtr>& params, double lr);

  long steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::unordered_map<const Parameter*, Moments> moments_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

struct ScheduleConfig {
  double lr = 0.002;
  int patience = 5;          // consecutive non-decreasing epochs before decay
  double decay = 1.0 / 3.0;  // lr multiplier on each trigger
  double lr_floor = 1e-7;    // converged once lr drops below this
  double overfit_guard = 0.99;  // stop once train accuracy exceeds this

  void validate() const;
};

struct ScheduleState {
  double lr = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;  // epochs since the last strict improvement
  int decay_events = 0;
  bool converged = false;
  bool overfit = false;

  bool should_stop() const { return converged || overfit; }
};

ScheduleState schedule_init(const ScheduleConfig& cfg);

// Epoch-end update: strict improvement resets the patience counter; patience
// consecutive stale epochs divide the rate by 3 and reset the counter.
void schedule_update(ScheduleState& st, const ScheduleConfig& cfg,
                     double val_loss, double train_acc);

}  // namespace ous
