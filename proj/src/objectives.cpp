#include "ous/objectives.hpp"

#include <cmath>
#include <cstring>

#include "ous/common.hpp"
#include "ous/textual.hpp"

namespace ous {

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const std::vector<size_t> shape = logits.val().shape();
  check(shape.size() == 2, ErrorKind::Shape, "cross_entropy: logits must be [B, K]");
  const size_t B = shape[0];
  const size_t K = shape[1];
  check(B >= 1, ErrorKind::Contract, "cross_entropy: empty batch");
  check(labels.size() == B, ErrorKind::Contract,
        "cross_entropy: need one label per row");
  std::vector<size_t> idx(B);
  for (size_t b = 0; b < B; ++b) {
    check(labels[b] >= 0 && static_cast<size_t>(labels[b]) < K, ErrorKind::Domain,
          "cross_entropy: label out of range");
    idx[b] = static_cast<size_t>(labels[b]);
  }
  return mean_all(neg(pick(log_softmax_last(logits), std::move(idx))));
}

Var polarity_loss(Var logits, const std::vector<int>& labels) {
  const std::vector<size_t> shape = logits.val().shape();
  check(shape.size() == 2 && shape[1] == 3, ErrorKind::Shape,
        "polarity_loss: logits must be [B, 3]");
  return cross_entropy(logits, labels);
}

Var similarity_loss(Var a, Var b, double guard) {
  const std::vector<size_t> sa = a.val().shape();
  const std::vector<size_t> sb = b.val().shape();
  check(sa.size() == 2 && sa == sb, ErrorKind::Shape,
        "similarity_loss: operands must be [B, F] with equal shapes");
  // Rowwise cosine as a dot of unit rows; mean(1 - c) = 1 - mean(c).
  Var c = sum_axis(mul(l2_normalize_rows(a, guard), l2_normalize_rows(b, guard)), 1);
  return affine(mean_all(c), -1.0, 1.0);
}

Var contrastive_loss(Tape& t, Var anchors, Var candidates, Var log_tau,
                     const std::vector<int>& positive) {
  const std::vector<size_t> sc = candidates.val().shape();
  check(sc.size() == 2 && sc[0] >= 1, ErrorKind::Contract,
        "contrastive_loss: candidates must be a non-empty [K, D] set");
  return cross_entropy(class_logits(t, anchors, candidates, log_tau), positive);
}

GatedLoss global_loss(Var polarity, Var similarity, Var contrast,
                      const GateConfig& gate, double prev_global) {
  GatedLoss out;
  out.gate_active = prev_global > gate.alpha;
  out.loss = out.gate_active ? add(add(polarity, similarity), contrast) : contrast;
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void Adam::step(const std::vector<ParamPtr>& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const ParamPtr& p : params) {
    if (!p->trainable) continue;
    const size_t n = p->value.size();
    Moments& mo = moments_[p.get()];
    if (mo.m.empty()) {
      mo.m.assign(n, 0.0);
      mo.v.assign(n, 0.0);
    }
    check(mo.m.size() == n, ErrorKind::Contract,
          "Adam: parameter size changed under the optimizer: " + p->name);
    // Fresh buffer: tapes holding the old value tensor keep their snapshot.
    // Math in float64; finalize() rounds into float32 storage when needed.
    Tensor next = Tensor::zeros(p->value.shape(), p->value.dtype());
    double* out = next.mutable_data();
    for (size_t i = 0; i < n; ++i) {
      const double g = p->gradient[i];
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
      out[i] = p->value[i] -
               lr * (mo.m[i] / bc1) / (std::sqrt(mo.v[i] / bc2) + cfg_.eps);
    }
    next.finalize("adam_step");
    p->value = std::move(next);
  }
}

// ---------------------------------------------------------------------------
// Plateau schedule
// ---------------------------------------------------------------------------

void ScheduleConfig::validate() const {
  check(lr > 0.0, ErrorKind::Config, "schedule: lr must be positive");
  check(patience >= 1, ErrorKind::Config, "schedule: patience must be >= 1");
  check(decay > 0.0 && decay < 1.0, ErrorKind::Config,
        "schedule: decay must lie in (0, 1)");
  check(lr_floor > 0.0, ErrorKind::Config, "schedule: lr_floor must be positive");
  check(overfit_guard > 0.0 && overfit_guard <= 1.0, ErrorKind::Config,
        "schedule: overfit_guard must lie in (0, 1]");
}

ScheduleState schedule_init(const ScheduleConfig& cfg) {
  cfg.validate();
  ScheduleState st;
  st.lr = cfg.lr;
  return st;
}

void schedule_update(ScheduleState& st, const ScheduleConfig& cfg,
                     double val_loss, double train_acc) {
  if (val_loss < st.best_val) {
    st.best_val = val_loss;
    st.stale_epochs = 0;
  } else {
    ++st.stale_epochs;
    if (st.stale_epochs >= cfg.patience) {
      st.lr *= cfg.decay;
      ++st.decay_events;
      st.stale_epochs = 0;
    }
  }
  if (st.lr < cfg.lr_floor) st.converged = true;
  if (train_acc > cfg.overfit_guard) st.overfit = true;
}

}  // namespace ous
