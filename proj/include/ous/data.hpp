#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ous/rng.hpp"
#include "ous/tensor.hpp"

namespace ous {

inline constexpr int kNumEmotions = 7;
inline constexpr int kNumPolarities = 3;

// Index order is part of the label contract.
extern const char* const kEmotionNames[kNumEmotions];    // happy..fear
extern const char* const kPolarityNames[kNumPolarities];  // positive, neutral, negative

// happy -> positive; neutral, surprise -> neutral; sad, angry, disgust, fear -> negative.
int polarity_from_emotion(int emotion);

// A video clip: frames [T, C, H, W], float32, every pixel in [0, 1].
struct ClipTensor {
  Tensor frames;

  explicit ClipTensor(Tensor f);

  size_t T() const { return frames.extent(0); }
  size_t C() const { return frames.extent(1); }
  size_t H() const { return frames.extent(2); }
  size_t W() const { return frames.extent(3); }
};

struct GeneratorConfig {
  uint64_t seed = 7;
  int clips_per_class = 200;
  size_t T = 8;
  size_t C = 3;
  size_t H = 64;
  size_t W = 64;
  size_t face_size = 32;
  size_t patch = 16;  // frame extents must be divisible by the encoder patch
  double ambiguous_fraction = 0.25;
  double val_fraction = 0.2;
  double noise_std = 0.02;

  void validate() const;
};

struct ClipRecord {
  std::string clip_id;
  int emotion = 0;
  int polarity = 0;
  bool ambiguous = false;
  std::string split;  // "train" or "val"
  std::string file;   // path relative to the corpus directory
};

struct Manifest {
  uint64_t seed = 0;
  GeneratorConfig config;
  std::vector<ClipRecord> clips;
};

// Pattern parameters drawn per clip before any pixel is rendered. The face
// pattern lives in a (orientation, frequency, phase-velocity) box indexed by
// `slot`: slots 0-6 are expression-specific, slot 7 is a pool shared by
// happy/fear, slot 8 by sad/surprise. Ambiguous clips draw from the shared
// pool with a label-independent distribution, so the face alone cannot
// distinguish the pair; the scene's polarity conditioning can.
struct ClipLatents {
  int emotion = 0;
  bool ambiguous = false;
  int slot = 0;
  double orient = 0.0;
  double freq = 0.0;
  double omega = 0.0;
  double amp = 0.0;
  double phase = 0.0;
  int polarity = 0;
};

// Number of distinct face-pattern boxes (7 class slots + 2 shared pools).
inline constexpr int kNumSlots = 9;

// Box centers/half-widths for a slot, used by drawing and by the
// box-membership classifiers below.
void slot_box(int slot, double& orient_c, double& freq_c, double& omega_c);
extern const double kOrientHalfWidth;
extern const double kFreqHalfWidth;
extern const double kOmegaHalfWidth;

// Draws the per-clip latents (consumes a fixed prefix of the clip substream).
ClipLatents draw_latents(SplitMix64& rng, int emotion, bool ambiguous);

// Recomputes a clip's latents from the corpus seed without rendering.
ClipLatents clip_latents(uint64_t corpus_seed, const ClipRecord& rec);

// Renders the clip from its latents; continues consuming the same substream.
ClipTensor render_clip(SplitMix64& rng, const ClipLatents& lat, const GeneratorConfig& cfg);

// Box-membership classification directly over latents. Face-only resolves
// shared pools by a fixed tie-break (it cannot do better); face+scene uses
// the polarity to resolve them exactly.
int classify_face_only(const ClipLatents& lat);
int classify_face_scene(const ClipLatents& lat);

// Generates 7 * clips_per_class clips plus manifest.json under out_dir.
Manifest generate_corpus(const GeneratorConfig& cfg, const std::string& out_dir);

// Frozen preprocessing: centered face crop + scene with the face square
// overwritten by the per-frame per-channel mean of the unmasked pixels.
std::pair<ClipTensor, ClipTensor> split_face_scene(const ClipTensor& clip, size_t face_size);

// Clip container (little-endian): "OUSC" | u32 version=1 | u32 T,C,H,W |
// float32 payload, row-major, T outermost.
void write_clip(const std::string& path, const ClipTensor& clip);
ClipTensor read_clip(const std::string& path);

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

// Path of a clip file relative to the corpus root.
std::string clip_path(const std::string& corpus_dir, const ClipRecord& rec);

}  // namespace ous
