#include "ous/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ous/detmath.hpp"

namespace fs = std::filesystem;

namespace ous {

const char* const kEmotionNames[kNumEmotions] = {"happy",    "sad",     "neutral", "angry",
                                                 "surprise", "disgust", "fear"};
const char* const kPolarityNames[kNumPolarities] = {"positive", "neutral", "negative"};

int polarity_from_emotion(int emotion) {
  check(emotion >= 0 && emotion < kNumEmotions, ErrorKind::Domain,
        "emotion index out of range: " + std::to_string(emotion));
  switch (emotion) {
    case 0: return 0;            // happy -> positive
    case 2: case 4: return 1;    // neutral, surprise -> neutral
    default: return 2;           // sad, angry, disgust, fear -> negative
  }
}

ClipTensor::ClipTensor(Tensor f) : frames(std::move(f)) {
  check(frames.rank() == 4, ErrorKind::Shape,
        "clip must be [T,C,H,W], got " + frames.shape_str());
  check(frames.dtype() == Dtype::f32, ErrorKind::Contract, "clip pixels must be float32");
  for (size_t i = 0; i < frames.size(); ++i)
    check(frames[i] >= 0.0 && frames[i] <= 1.0, ErrorKind::Domain,
          "clip pixel outside [0,1]");
}

void GeneratorConfig::validate() const {
  check(clips_per_class >= 1, ErrorKind::Config, "clips_per_class must be >= 1");
  check(T >= 1, ErrorKind::Config, "T must be >= 1");
  check(C >= 1, ErrorKind::Config, "C must be >= 1");
  check(H >= 1 && W >= 1, ErrorKind::Config, "frame extents must be >= 1");
  check(patch >= 1 && H % patch == 0 && W % patch == 0, ErrorKind::Config,
        "frame extents must be divisible by the patch size");
  check(face_size >= 1 && H >= 2 * face_size && W >= face_size, ErrorKind::Config,
        "frame height must be at least twice the face size");
  check(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0, ErrorKind::Config,
        "ambiguous_fraction must be in [0,1]");
  check(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::Config,
        "val_fraction must be in (0,1)");
  check(noise_std >= 0.0, ErrorKind::Config, "noise_std must be >= 0");
}

// ---------------------------------------------------------------------------
// latents

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.28318530717958647692;

// Scene appearance per polarity: base RGB, texture frequency, blob tint and
// blob radius (relative to frame height).
constexpr double kPolBase[3][3] = {
    {0.30, 0.62, 0.34},  // positive: green-leaning
    {0.50, 0.50, 0.52},  // neutral: grey
    {0.56, 0.26, 0.30},  // negative: red-leaning
};
constexpr double kPolTexFreq[3] = {2.0, 3.5, 5.0};
constexpr double kPolBlobAmp[3][3] = {
    {0.10, 0.16, 0.08},
    {0.12, 0.12, 0.12},
    {0.16, 0.06, 0.06},
};
constexpr double kPolBlobSigma[3] = {0.055, 0.080, 0.105};
constexpr int kNumBlobs = 3;

// Per-channel phase offsets so channels differ without carrying label signal.
constexpr double kChanPhase[3] = {0.0, 0.7, 1.4};

// Which shared pool an emotion may draw from (-1: never ambiguous).
int pool_of(int emotion) {
  if (emotion == 0 || emotion == 6) return 7;  // happy <-> fear
  if (emotion == 1 || emotion == 4) return 8;  // sad <-> surprise
  return -1;
}
}  // namespace

const double kOrientHalfWidth = kPi / 36.0;
const double kFreqHalfWidth = 0.10;
const double kOmegaHalfWidth = 0.03;

void slot_box(int slot, double& orient_c, double& freq_c, double& omega_c) {
  check(slot >= 0 && slot < kNumSlots, ErrorKind::Domain, "slot out of range");
  orient_c = kPi * (static_cast<double>(slot) + 0.5) / 9.0;
  freq_c = 1.0 + 0.45 * static_cast<double>(slot);
  omega_c = 0.25 + 0.14 * static_cast<double>(slot);
}

ClipLatents draw_latents(SplitMix64& rng, int emotion, bool ambiguous) {
  check(!ambiguous || pool_of(emotion) >= 0, ErrorKind::Contract,
        "only happy/fear and sad/surprise clips can be ambiguous");
  ClipLatents lat;
  lat.emotion = emotion;
  lat.ambiguous = ambiguous;
  lat.polarity = polarity_from_emotion(emotion);
  lat.slot = ambiguous ? pool_of(emotion) : emotion;
  double oc, fc, wc;
  slot_box(lat.slot, oc, fc, wc);
  lat.orient = oc + rng.uniform(-kOrientHalfWidth, kOrientHalfWidth);
  lat.freq = fc + rng.uniform(-kFreqHalfWidth, kFreqHalfWidth);
  lat.omega = wc + rng.uniform(-kOmegaHalfWidth, kOmegaHalfWidth);
  lat.amp = rng.uniform(0.25, 0.35);
  lat.phase = rng.uniform(0.0, kTwoPi);
  return lat;
}

ClipLatents clip_latents(uint64_t corpus_seed, const ClipRecord& rec) {
  SplitMix64 rng = substream(corpus_seed, rec.clip_id);
  return draw_latents(rng, rec.emotion, rec.ambiguous);
}

int classify_face_only(const ClipLatents& lat) {
  for (int s = 0; s < kNumSlots; ++s) {
    double oc, fc, wc;
    slot_box(s, oc, fc, wc);
    if (std::abs(lat.orient - oc) <= kOrientHalfWidth &&
        std::abs(lat.freq - fc) <= kFreqHalfWidth &&
        std::abs(lat.omega - wc) <= kOmegaHalfWidth) {
      if (s < kNumEmotions) return s;
      // Shared pool: both pair members are equally likely; any fixed
      // tie-break is Bayes-optimal at 0.5 on the pool.
      return s == 7 ? 0 : 1;
    }
  }
  fail(ErrorKind::Contract, "latents fall outside every slot box");
}

int classify_face_scene(const ClipLatents& lat) {
  int face = classify_face_only(lat);
  for (int s = 0; s < kNumSlots; ++s) {
    double oc, fc, wc;
    slot_box(s, oc, fc, wc);
    if (std::abs(lat.orient - oc) <= kOrientHalfWidth &&
        std::abs(lat.freq - fc) <= kFreqHalfWidth &&
        std::abs(lat.omega - wc) <= kOmegaHalfWidth) {
      if (s == 7) return lat.polarity == 0 ? 0 : 6;  // positive scene -> happy
      if (s == 8) return lat.polarity == 2 ? 1 : 4;  // negative scene -> sad
      return face;
    }
  }
  return face;
}

// ---------------------------------------------------------------------------
// rendering

ClipTensor render_clip(SplitMix64& rng, const ClipLatents& lat, const GeneratorConfig& cfg) {
  const size_t T = cfg.T, C = cfg.C, H = cfg.H, W = cfg.W, F = cfg.face_size;
  const size_t r0 = (H - F) / 2, c0 = (W - F) / 2;
  const int pol = lat.polarity;

  // Scene nuisance draws, in fixed order.
  double jitter[3] = {0.0, 0.0, 0.0};
  for (size_t c = 0; c < C && c < 3; ++c) jitter[c] = rng.uniform(-0.04, 0.04);
  double tex_freq = kPolTexFreq[pol] + rng.uniform(-0.3, 0.3);
  double tex_orient = rng.uniform(0.0, kTwoPi);
  double tex_phase = rng.uniform(0.0, kTwoPi);
  double blob_x[kNumBlobs], blob_y[kNumBlobs];
  for (int bi = 0; bi < kNumBlobs; ++bi) {
    // Blob centers land outside the face square so masking cannot erase them.
    double bx, by;
    do {
      bx = rng.uniform(0.0, static_cast<double>(W));
      by = rng.uniform(0.0, static_cast<double>(H));
    } while (bx >= static_cast<double>(c0) && bx < static_cast<double>(c0 + F) &&
             by >= static_cast<double>(r0) && by < static_cast<double>(r0 + F));
    blob_x[bi] = bx;
    blob_y[bi] = by;
  }
  double drift = rng.uniform(-0.06, 0.06);

  double co = detmath::cos(lat.orient), so = detmath::sin(lat.orient);
  double tco = detmath::cos(tex_orient), tso = detmath::sin(tex_orient);
  double sigma = kPolBlobSigma[pol] * static_cast<double>(H);
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  Tensor frames = Tensor::zeros({T, C, H, W}, Dtype::f32);
  double* px = frames.mutable_data();
  for (size_t t = 0; t < T; ++t) {
    double td = static_cast<double>(t);
    double drift_term = (T > 1) ? drift * (td / static_cast<double>(T - 1) - 0.5) : 0.0;
    for (size_t c = 0; c < C; ++c) {
      double chan = (c < 3) ? kChanPhase[c] : 0.0;
      for (size_t y = 0; y < H; ++y) {
        for (size_t x = 0; x < W; ++x) {
          double val;
          bool in_face = (y >= r0 && y < r0 + F && x >= c0 && x < c0 + F);
          if (in_face) {
            double u = static_cast<double>(x - c0) / static_cast<double>(F);
            double v = static_cast<double>(y - r0) / static_cast<double>(F);
            double arg = kTwoPi * lat.freq * (u * co + v * so) + lat.phase + lat.omega * td + chan;
            val = 0.5 + lat.amp * detmath::sin(arg);
          } else {
            double u = static_cast<double>(x) / static_cast<double>(W);
            double v = static_cast<double>(y) / static_cast<double>(H);
            double tex = 0.05 * detmath::sin(kTwoPi * tex_freq * (u * tco + v * tso) + tex_phase +
                                             0.15 * td);
            double blobs = 0.0;
            for (int bi = 0; bi < kNumBlobs; ++bi) {
              double dx = static_cast<double>(x) - blob_x[bi];
              double dy = static_cast<double>(y) - blob_y[bi];
              blobs += kPolBlobAmp[pol][c < 3 ? c : 0] * detmath::exp(-(dx * dx + dy * dy) * inv2s2);
            }
            val = kPolBase[pol][c < 3 ? c : 0] + jitter[c < 3 ? c : 0] + tex + blobs + drift_term;
          }
          val += cfg.noise_std * rng.normal();
          val = std::min(1.0, std::max(0.0, val));
          px[((t * C + c) * H + y) * W + x] = val;
        }
      }
    }
  }
  frames.finalize("render_clip");
  return ClipTensor(std::move(frames));
}

// ---------------------------------------------------------------------------
// corpus

std::string clip_path(const std::string& corpus_dir, const ClipRecord& rec) {
  return (fs::path(corpus_dir) / rec.file).string();
}

Manifest generate_corpus(const GeneratorConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "clips", ec);
  check(!ec, ErrorKind::Io, "cannot create output directory: " + out_dir);

  Manifest m;
  m.seed = cfg.seed;
  m.config = cfg;

  const int n = cfg.clips_per_class;
  const int n_amb = static_cast<int>(std::llround(cfg.ambiguous_fraction * n));
  const int n_val = static_cast<int>(std::llround(cfg.val_fraction * n));

  for (int e = 0; e < kNumEmotions; ++e) {
    // Spread validation picks uniformly with a per-class substream.
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    SplitMix64 split_rng = substream(cfg.seed, "split_class_" + std::to_string(e));
    shuffle(order, split_rng);
    std::vector<bool> is_val(static_cast<size_t>(n), false);
    for (int i = 0; i < n_val; ++i) is_val[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;

    for (int i = 0; i < n; ++i) {
      ClipRecord rec;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "c%d_%04d", e, i);
      rec.clip_id = idbuf;
      rec.emotion = e;
      rec.polarity = polarity_from_emotion(e);
      rec.ambiguous = (pool_of(e) >= 0) && (i < n_amb);
      rec.split = is_val[static_cast<size_t>(i)] ? "val" : "train";
      rec.file = "clips/" + rec.clip_id + ".ousc";

      SplitMix64 rng = substream(cfg.seed, rec.clip_id);
      ClipLatents lat = draw_latents(rng, e, rec.ambiguous);
      ClipTensor clip = render_clip(rng, lat, cfg);
      write_clip(clip_path(out_dir, rec), clip);
      m.clips.push_back(std::move(rec));
    }
  }

  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

// ---------------------------------------------------------------------------
// preprocessing

std::pair<ClipTensor, ClipTensor> split_face_scene(const ClipTensor& clip, size_t face_size) {
  const size_t T = clip.T(), C = clip.C(), H = clip.H(), W = clip.W(), F = face_size;
  check(F >= 1 && F <= H && F <= W, ErrorKind::Shape,
        "face size " + std::to_string(F) + " exceeds frame " + clip.frames.shape_str());
  const size_t r0 = (H - F) / 2, c0 = (W - F) / 2;

  Tensor face = Tensor::zeros({T, C, F, F}, Dtype::f32);
  Tensor scene = clip.frames.clone();
  const double* src = clip.frames.data();
  double* fdst = face.mutable_data();
  double* sdst = scene.mutable_data();

  for (size_t t = 0; t < T; ++t) {
    for (size_t c = 0; c < C; ++c) {
      const double* plane = src + (t * C + c) * H * W;
      // Mean over pixels outside the face square, fixed row-major order.
      double sum = 0.0;
      size_t cnt = 0;
      for (size_t y = 0; y < H; ++y) {
        for (size_t x = 0; x < W; ++x) {
          bool in_face = (y >= r0 && y < r0 + F && x >= c0 && x < c0 + F);
          if (!in_face) {
            sum += plane[y * W + x];
            ++cnt;
          }
        }
      }
      double mean = (cnt > 0) ? sum / static_cast<double>(cnt) : 0.5;
      for (size_t y = 0; y < F; ++y)
        for (size_t x = 0; x < F; ++x) {
          fdst[((t * C + c) * F + y) * F + x] = plane[(r0 + y) * W + (c0 + x)];
          sdst[((t * C + c) * H + (r0 + y)) * W + (c0 + x)] = mean;
        }
    }
  }
  face.finalize("split_face_scene");
  scene.finalize("split_face_scene");
  return {ClipTensor(std::move(face)), ClipTensor(std::move(scene))};
}

}  // namespace ous
