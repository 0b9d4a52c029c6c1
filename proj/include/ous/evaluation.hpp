#pragma once

#include <array>
#include <string>
#include <vector>

#include "ous/model.hpp"

namespace ous {

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::array<std::array<long, kNumEmotions>, kNumEmotions> counts{};

  long total() const;
  long row_sum(int k) const;
  long trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels);

// Unweighted average recall: mean of per-class recalls over classes that
// actually appear (zero-support classes are skipped, not divided by).
double uar(const ConfusionMatrix& cm);

// Weighted average recall = overall accuracy = trace / total.
double war(const ConfusionMatrix& cm);

// Per-class recall; NaN-free: zero-support classes report 0.
std::array<double, kNumEmotions> per_class_recall(const ConfusionMatrix& cm);

// Mean silhouette of `features` [n, d] under integer labels, Euclidean
// distance: s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a(i) the mean
// distance to the other members of i's cluster and b(i) the smallest mean
// distance to any other cluster. Singleton clusters contribute 0. Requires
// n >= 2 and at least two distinct labels.
double silhouette(const Tensor& features, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Split evaluation
// ---------------------------------------------------------------------------

struct MetricsReport {
  double uar = 0.0;
  double war = 0.0;
  std::array<double, kNumEmotions> recall{};
  double ambiguous_acc = 0.0;  // accuracy over clips flagged ambiguous
  long ambiguous_count = 0;
  ConfusionMatrix cm;
};

// Feature matrices captured at the four probe points, one row per clip.
struct EvalTaps {
  Tensor vision_feat;   // [n, D]   frozen tower, face tokens meaned over frames
  Tensor frame_feat;    // [n, F]   frames-encoder output
  Tensor aligned_feat;  // [n, 2F]  both aligned streams, concatenated
  Tensor fused_feat;    // [n, D_f] fusion output
};

struct ClusterReport {
  double vision_encoder = 0.0;
  double frame_encoder = 0.0;
  double pre_fusion_aligned = 0.0;
  double post_fusion_fused = 0.0;
};

struct EvalResult {
  std::vector<size_t> clip_indices;  // manifest rows evaluated, in order
  std::vector<int> labels;
  std::vector<int> preds;
  std::vector<bool> ambiguous;
  double mean_loss = 0.0;  // per-clip mean CE of the class logits
  MetricsReport metrics;
  EvalTaps taps;  // filled when requested
};

// Runs the model over every manifest clip whose split matches, in manifest
// order, batched without gradients. zero_scene blanks the scene stream
// (face-only ablation); with_taps additionally gathers the probe features.
EvalResult evaluate_split(const Model& model, const FeatureCache& cache,
                          const Manifest& manifest, const std::string& split,
                          size_t batch, bool zero_scene = false, bool with_taps = false);

ClusterReport cluster_report(const EvalTaps& taps, const std::vector<int>& labels);

}  // namespace ous
