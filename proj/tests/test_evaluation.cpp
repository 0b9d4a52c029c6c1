#include "ous/evaluation.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "micro_fixtures.hpp"
#include "ous/rng.hpp"

using namespace ous;
using testfix::micro_config;
using testfix::synthetic_cache;
using testfix::synthetic_manifest;

namespace {

Tensor column(const std::vector<double>& vals) {
  return Tensor::from({vals.size(), 1}, vals, Dtype::f64);
}

}  // namespace

TEST_CASE("confusion matrix counting") {
  ConfusionMatrix cm = confusion({0, 1, 1}, {0, 1, 2});
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[1][1] == 1);
  CHECK(cm.counts[2][1] == 1);
  CHECK(cm.total() == 3);
  CHECK(cm.trace() == 2);
  CHECK(cm.row_sum(0) == 1);
  CHECK(cm.row_sum(2) == 1);
  CHECK(cm.row_sum(6) == 0);

  ConfusionMatrix empty;
  CHECK(empty.total() == 0);
  CHECK(empty.trace() == 0);

  CHECK_THROWS_WITH_AS(confusion({0, 1}, {0}), doctest::Contains("lengths differ"), Error);
  CHECK_THROWS_WITH_AS(confusion({0}, {7}), doctest::Contains("label out of range"), Error);
  CHECK_THROWS_WITH_AS(confusion({-1}, {0}), doctest::Contains("prediction out of range"),
                       Error);
}

TEST_CASE("recall averages") {
  SUBCASE("perfect predictions score 1.0 on both averages") {
    std::vector<int> y;
    for (int k = 0; k < kNumEmotions; ++k) y.insert(y.end(), 3, k);
    ConfusionMatrix cm = confusion(y, y);
    CHECK(uar(cm) == 1.0);
    CHECK(war(cm) == 1.0);
    for (double r : per_class_recall(cm)) CHECK(r == 1.0);
  }

  SUBCASE("balanced two-class example") {
    // recalls 1.0 and 0.5 -> uar 0.75; 3 of 4 correct -> war 0.75.
    ConfusionMatrix cm = confusion({0, 0, 1, 0}, {0, 0, 1, 1});
    CHECK(uar(cm) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(war(cm) == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("imbalanced support separates the two averages") {
    // class 0: 4/6 correct, class 1: 1/2 correct.
    ConfusionMatrix cm = confusion({0, 0, 0, 0, 1, 1, 1, 0}, {0, 0, 0, 0, 0, 0, 1, 1});
    CHECK(war(cm) == doctest::Approx(5.0 / 8.0).epsilon(1e-12));
    CHECK(uar(cm) == doctest::Approx((4.0 / 6.0 + 0.5) / 2.0).epsilon(1e-12));
  }

  SUBCASE("zero-support classes are skipped, not averaged in") {
    // Only classes 0 and 3 appear; a 7-way average would halve the score.
    ConfusionMatrix cm = confusion({0, 0, 3, 0}, {0, 0, 3, 3});
    CHECK(uar(cm) == doctest::Approx(0.75).epsilon(1e-12));
    auto rec = per_class_recall(cm);
    CHECK(rec[1] == 0.0);
    CHECK(rec[3] == 0.5);
  }

  SUBCASE("empty matrix is a contract error") {
    ConfusionMatrix cm;
    CHECK_THROWS_WITH_AS(uar(cm), doctest::Contains("empty"), Error);
    CHECK_THROWS_WITH_AS(war(cm), doctest::Contains("empty"), Error);
  }

  SUBCASE("duplicating every sample changes neither average") {
    SplitMix64 rng(404);
    std::vector<int> preds, labels;
    for (int i = 0; i < 60; ++i) {
      preds.push_back(static_cast<int>(rng.next() % kNumEmotions));
      labels.push_back(static_cast<int>(rng.next() % kNumEmotions));
    }
    std::vector<int> preds2 = preds, labels2 = labels;
    preds2.insert(preds2.end(), preds.begin(), preds.end());
    labels2.insert(labels2.end(), labels.begin(), labels.end());
    ConfusionMatrix a = confusion(preds, labels);
    ConfusionMatrix b = confusion(preds2, labels2);
    CHECK(uar(a) == doctest::Approx(uar(b)).epsilon(1e-12));
    CHECK(war(a) == doctest::Approx(war(b)).epsilon(1e-12));
  }

  SUBCASE("weighted recall is plain accuracy") {
    SplitMix64 rng(405);
    std::vector<int> preds, labels;
    long hits = 0;
    for (int i = 0; i < 200; ++i) {
      preds.push_back(static_cast<int>(rng.next() % kNumEmotions));
      labels.push_back(static_cast<int>(rng.next() % kNumEmotions));
      if (preds.back() == labels.back()) ++hits;
    }
    CHECK(war(confusion(preds, labels)) ==
          doctest::Approx(hits / 200.0).epsilon(1e-12));
  }
}

TEST_CASE("silhouette score") {
  SUBCASE("two tight, distant pairs") {
    // a(0) = 0.1, b(0) = (10 + 10.1)/2 = 10.05 -> s = 9.95/10.05, and the
    // inner points give 9.85/9.95; the four-point mean is the frozen value.
    double s = silhouette(column({0.0, 0.1, 10.0, 10.1}), {0, 0, 1, 1});
    CHECK(s == doctest::Approx(0.9899997499937498).epsilon(1e-12));
  }

  SUBCASE("singletons contribute zero but still count") {
    // pair {0, 1} + singleton {5}: s = (0.8 + 0.75 + 0) / 3.
    double s = silhouette(column({0.0, 1.0, 5.0}), {0, 0, 1});
    CHECK(s == doctest::Approx((0.8 + 0.75) / 3.0).epsilon(1e-12));
  }

  SUBCASE("all singletons score exactly zero") {
    CHECK(silhouette(column({0.0, 3.0, 9.0}), {0, 1, 2}) == 0.0);
  }

  SUBCASE("interleaved clusters score negative") {
    // Each point's nearest neighbour is in the other cluster.
    double s = silhouette(column({0.0, 10.0, 0.1, 10.1}), {0, 0, 1, 1});
    CHECK(s < -0.4);
  }

  SUBCASE("random data stays within [-1, 1]") {
    SplitMix64 rng(406);
    Tensor x = Tensor::randn({40, 5}, rng, 0.0, 1.0, Dtype::f64);
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(static_cast<int>(rng.next() % 3));
    double s = silhouette(x, labels);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }

  SUBCASE("translation and positive scaling leave the score unchanged") {
    SplitMix64 rng(407);
    Tensor x = Tensor::randn({24, 4}, rng, 0.0, 1.0, Dtype::f64);
    std::vector<int> labels;
    for (int i = 0; i < 24; ++i) labels.push_back(static_cast<int>(rng.next() % 4));
    Tensor y = Tensor::zeros({24, 4}, Dtype::f64);
    double* out = y.mutable_data();
    for (size_t i = 0; i < x.size(); ++i) out[i] = 3.5 * x[i] - 11.0;
    y.finalize("test");
    CHECK(silhouette(x, labels) == doctest::Approx(silhouette(y, labels)).epsilon(1e-12));
  }

  SUBCASE("contract checks") {
    CHECK_THROWS_WITH_AS(silhouette(column({0.0, 1.0}), {0, 0}),
                         doctest::Contains("single cluster"), Error);
    CHECK_THROWS_WITH_AS(silhouette(column({0.0}), {0}),
                         doctest::Contains("at least two points"), Error);
    CHECK_THROWS_WITH_AS(silhouette(column({0.0, 1.0}), {0}),
                         doctest::Contains("one label per row"), Error);
    CHECK_THROWS_WITH_AS(silhouette(Tensor::from({2}, {0.0, 1.0}, Dtype::f64), {0, 1}),
                         doctest::Contains("[n, d]"), Error);
  }
}

TEST_CASE("split evaluation") {
  ModelConfig cfg = micro_config();
  Model m = Model::make(cfg);
  const size_t clips = 56;  // 8 per class: 6 train rounds + 2 val rounds
  FeatureCache cache = synthetic_cache(cfg, clips, 99);
  Manifest man = synthetic_manifest(clips, 99);

  SUBCASE("val split census and metric consistency") {
    EvalResult r = evaluate_split(m, cache, man, "val", 5);
    CHECK(r.clip_indices.size() == 14);
    CHECK(r.preds.size() == 14);
    CHECK(r.metrics.cm.total() == 14);
    CHECK(r.metrics.ambiguous_count == 0);
    CHECK(r.metrics.war == doctest::Approx(war(r.metrics.cm)));
    CHECK(std::isfinite(r.mean_loss));
    // An untrained model should sit near the 7-way chance loss, not at 0.
    CHECK(r.mean_loss > 0.5);
  }

  SUBCASE("train split carries the ambiguous flags") {
    EvalResult r = evaluate_split(m, cache, man, "train", 16);
    CHECK(r.clip_indices.size() == 42);
    CHECK(r.metrics.ambiguous_count == 7);
    long hits = 0;
    for (size_t i = 0; i < r.preds.size(); ++i)
      if (r.ambiguous[i] && r.preds[i] == r.labels[i]) ++hits;
    CHECK(r.metrics.ambiguous_acc == doctest::Approx(hits / 7.0));
  }

  SUBCASE("batch size does not change the outcome") {
    EvalResult a = evaluate_split(m, cache, man, "val", 1);
    EvalResult b = evaluate_split(m, cache, man, "val", 14);
    EvalResult c = evaluate_split(m, cache, man, "val", 5);
    CHECK(a.preds == b.preds);
    CHECK(a.preds == c.preds);
    // The loss sum is partitioned differently, so allow accumulation jitter.
    CHECK(a.mean_loss == doctest::Approx(b.mean_loss).epsilon(1e-9));
    CHECK(a.mean_loss == doctest::Approx(c.mean_loss).epsilon(1e-9));
  }

  SUBCASE("blanking the scene equals a zeroed cache") {
    FeatureCache blanked;
    for (const ClipFeatures& f : cache.clips) {
      ClipFeatures g;
      g.face_seq = f.face_seq;
      g.scene_seq = Tensor::zeros(f.scene_seq.shape(), f.scene_seq.dtype());
      g.early_pooled = Tensor::zeros(f.early_pooled.shape(), f.early_pooled.dtype());
      blanked.clips.push_back(std::move(g));
    }
    EvalResult a = evaluate_split(m, cache, man, "val", 4, /*zero_scene=*/true);
    EvalResult b = evaluate_split(m, blanked, man, "val", 4, /*zero_scene=*/false);
    CHECK(a.preds == b.preds);
    CHECK(a.mean_loss == b.mean_loss);  // identical graphs, bitwise
  }

  SUBCASE("probe taps") {
    EvalResult r = evaluate_split(m, cache, man, "val", 5, false, /*with_taps=*/true);
    const size_t n = r.clip_indices.size();
    CHECK(r.taps.vision_feat.shape() == std::vector<size_t>{n, cfg.vision.D});
    CHECK(r.taps.frame_feat.shape() == std::vector<size_t>{n, cfg.enc.F});
    CHECK(r.taps.aligned_feat.shape() == std::vector<size_t>{n, 2 * cfg.enc.F});
    CHECK(r.taps.fused_feat.shape() == std::vector<size_t>{n, cfg.fusion.D_f});

    // The frozen-tower tap is the frame mean of the cached face sequence.
    for (size_t row = 0; row < n; ++row) {
      const Tensor& seq = cache.clips[r.clip_indices[row]].face_seq;
      for (size_t k = 0; k < cfg.vision.D; ++k) {
        double mean = 0.0;
        for (size_t f = 0; f < cfg.frames; ++f) mean += seq[f * cfg.vision.D + k];
        mean /= static_cast<double>(cfg.frames);
        CHECK(r.taps.vision_feat[row * cfg.vision.D + k] ==
              doctest::Approx(mean).epsilon(1e-12));
      }
    }

    ClusterReport rep = cluster_report(r.taps, r.labels);
    for (double s : {rep.vision_encoder, rep.frame_encoder, rep.pre_fusion_aligned,
                     rep.post_fusion_fused}) {
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
    }
  }

  SUBCASE("contract checks") {
    CHECK_THROWS_WITH_AS(evaluate_split(m, cache, man, "test", 4),
                         doctest::Contains("no clips in split"), Error);
    CHECK_THROWS_WITH_AS(evaluate_split(m, cache, man, "val", 0),
                         doctest::Contains("batch"), Error);
    Manifest short_man = man;
    short_man.clips.pop_back();
    CHECK_THROWS_WITH_AS(evaluate_split(m, cache, short_man, "val", 4),
                         doctest::Contains("disagree"), Error);
  }
}
