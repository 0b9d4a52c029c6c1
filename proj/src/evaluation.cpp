#include "ous/evaluation.hpp"

#include <cmath>
#include <limits>

#include "ous/common.hpp"
#include "ous/objectives.hpp"

namespace ous {

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts)
    for (long c : row) n += c;
  return n;
}

long ConfusionMatrix::row_sum(int k) const {
  long n = 0;
  for (long c : counts[static_cast<size_t>(k)]) n += c;
  return n;
}

long ConfusionMatrix::trace() const {
  long n = 0;
  for (int k = 0; k < kNumEmotions; ++k) n += counts[k][k];
  return n;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
  check(preds.size() == labels.size(), ErrorKind::Contract,
        "confusion: prediction/label lengths differ");
  ConfusionMatrix cm;
  for (size_t i = 0; i < preds.size(); ++i) {
    check(labels[i] >= 0 && labels[i] < kNumEmotions, ErrorKind::Domain,
          "confusion: label out of range");
    check(preds[i] >= 0 && preds[i] < kNumEmotions, ErrorKind::Domain,
          "confusion: prediction out of range");
    ++cm.counts[labels[i]][preds[i]];
  }
  return cm;
}

double uar(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int classes = 0;
  for (int k = 0; k < kNumEmotions; ++k) {
    const long support = cm.row_sum(k);
    if (support == 0) continue;
    sum += static_cast<double>(cm.counts[k][k]) / static_cast<double>(support);
    ++classes;
  }
  check(classes > 0, ErrorKind::Contract, "uar: empty confusion matrix");
  return sum / classes;
}

double war(const ConfusionMatrix& cm) {
  const long n = cm.total();
  check(n > 0, ErrorKind::Contract, "war: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

std::array<double, kNumEmotions> per_class_recall(const ConfusionMatrix& cm) {
  std::array<double, kNumEmotions> out{};
  for (int k = 0; k < kNumEmotions; ++k) {
    const long support = cm.row_sum(k);
    out[k] = support == 0
                 ? 0.0
                 : static_cast<double>(cm.counts[k][k]) / static_cast<double>(support);
  }
  return out;
}

double silhouette(const Tensor& features, const std::vector<int>& labels) {
  const std::vector<size_t>& shape = features.shape();
  check(shape.size() == 2, ErrorKind::Contract, "silhouette: features must be [n, d]");
  const size_t n = shape[0];
  const size_t d = shape[1];
  check(n >= 2, ErrorKind::Contract, "silhouette: need at least two points");
  check(labels.size() == n, ErrorKind::Contract, "silhouette: one label per row");

  // Cluster ids and sizes.
  std::vector<int> ids;
  for (int l : labels) {
    bool seen = false;
    for (int id : ids) seen = seen || id == l;
    if (!seen) ids.push_back(l);
  }
  check(ids.size() >= 2, ErrorKind::Contract, "silhouette: a single cluster is unscorable");
  std::vector<size_t> size_of(ids.size(), 0);
  std::vector<size_t> cluster(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t c = 0; c < ids.size(); ++c)
      if (ids[c] == labels[i]) {
        cluster[i] = c;
        ++size_of[c];
      }

  const double* x = features.data();
  auto dist = [&](size_t i, size_t j) {
    double s = 0.0;
    for (size_t k = 0; k < d; ++k) {
      const double diff = x[i * d + k] - x[j * d + k];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (size_of[cluster[i]] == 1) continue;  // singleton: s(i) = 0
    std::vector<double> mean_to(ids.size(), 0.0);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_to[cluster[j]] += dist(i, j);
    }
    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < ids.size(); ++c) {
      if (c == cluster[i]) {
        a = mean_to[c] / static_cast<double>(size_of[c] - 1);
      } else {
        b = std::min(b, mean_to[c] / static_cast<double>(size_of[c]));
      }
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Split evaluation
// ---------------------------------------------------------------------------

namespace {

void copy_rows(Tensor& dst, size_t row0, const Tensor& src) {
  const size_t cols = dst.extent(1);
  check(src.size() % cols == 0, ErrorKind::Contract, "tap width mismatch");
  double* out = dst.mutable_data();
  for (size_t i = 0; i < src.size(); ++i) out[row0 * cols + i] = src[i];
}

}  // namespace

EvalResult evaluate_split(const Model& model, const FeatureCache& cache,
                          const Manifest& manifest, const std::string& split,
                          size_t batch, bool zero_scene, bool with_taps) {
  check(batch >= 1, ErrorKind::Contract, "evaluate_split: batch must be >= 1");
  check(cache.clips.size() == manifest.clips.size(), ErrorKind::Contract,
        "evaluate_split: cache and manifest disagree");

  EvalResult res;
  for (size_t i = 0; i < manifest.clips.size(); ++i)
    if (manifest.clips[i].split == split) {
      res.clip_indices.push_back(i);
      res.labels.push_back(manifest.clips[i].emotion);
      res.ambiguous.push_back(manifest.clips[i].ambiguous);
    }
  check(!res.clip_indices.empty(), ErrorKind::Contract,
        "evaluate_split: no clips in split \"" + split + "\"");

  const size_t n = res.clip_indices.size();
  const ModelConfig& cfg = model.cfg;
  if (with_taps) {
    res.taps.vision_feat = Tensor::zeros({n, cfg.vision.D}, Dtype::f64);
    res.taps.frame_feat = Tensor::zeros({n, cfg.enc.F}, Dtype::f64);
    res.taps.aligned_feat = Tensor::zeros({n, 2 * cfg.enc.F}, Dtype::f64);
    res.taps.fused_feat = Tensor::zeros({n, cfg.fusion.D_f}, Dtype::f64);
  }

  double loss_sum = 0.0;
  for (size_t at = 0; at < n; at += batch) {
    const size_t take = std::min(batch, n - at);
    std::vector<size_t> idx(res.clip_indices.begin() + at,
                            res.clip_indices.begin() + at + take);
    std::vector<int> lab(res.labels.begin() + at, res.labels.begin() + at + take);

    Tape t(cfg.dtype);
    BatchInputs in = batch_inputs(t, cache, idx, cfg, zero_scene);
    ModelOutput out = model.forward(t, in);
    loss_sum += cross_entropy(out.logits, lab).val().item() * static_cast<double>(take);

    const Tensor& logits = out.logits.val();
    for (size_t b = 0; b < take; ++b) {
      int best = 0;
      double best_v = logits[b * kNumEmotions];
      for (int k = 1; k < kNumEmotions; ++k) {
        const double v = logits[b * kNumEmotions + static_cast<size_t>(k)];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      res.preds.push_back(best);
    }

    if (with_taps) {
      // The frozen vision tap comes straight from the cache (frame mean of
      // the face sequence); the trainable taps come off this batch's graph.
      Tensor vis = mean_axis(in.face_seq, 1).val();
      copy_rows(res.taps.vision_feat, at, vis);
      copy_rows(res.taps.frame_feat, at, out.frame_feat.val());
      copy_rows(res.taps.aligned_feat, at, concat({out.v_ft, out.v_st}, 1).val());
      copy_rows(res.taps.fused_feat, at, out.fused.val());
    }
  }

  if (with_taps) {
    res.taps.vision_feat.finalize("eval_taps");
    res.taps.frame_feat.finalize("eval_taps");
    res.taps.aligned_feat.finalize("eval_taps");
    res.taps.fused_feat.finalize("eval_taps");
  }

  res.mean_loss = loss_sum / static_cast<double>(n);
  res.metrics.cm = confusion(res.preds, res.labels);
  res.metrics.uar = uar(res.metrics.cm);
  res.metrics.war = war(res.metrics.cm);
  res.metrics.recall = per_class_recall(res.metrics.cm);
  long amb_hit = 0;
  long amb_n = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!res.ambiguous[i]) continue;
    ++amb_n;
    if (res.preds[i] == res.labels[i]) ++amb_hit;
  }
  res.metrics.ambiguous_count = amb_n;
  res.metrics.ambiguous_acc =
      amb_n == 0 ? 0.0 : static_cast<double>(amb_hit) / static_cast<double>(amb_n);
  return res;
}

ClusterReport cluster_report(const EvalTaps& taps, const std::vector<int>& labels) {
  ClusterReport rep;
  rep.vision_encoder = silhouette(taps.vision_feat, labels);
  rep.frame_encoder = silhouette(taps.frame_feat, labels);
  rep.pre_fusion_aligned = silhouette(taps.aligned_feat, labels);
  rep.post_fusion_fused = silhouette(taps.fused_feat, labels);
  return rep;
}

}  // namespace ous
