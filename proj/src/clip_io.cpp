#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "ous/data.hpp"
#include "bytes.hpp"
#include "serde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ous {

namespace {

constexpr char kMagic[4] = {'O', 'U', 'S', 'C'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 24;
constexpr uint64_t kMaxElements = 1ull << 28;  // 1 GiB of float32 payload

}  // namespace

void write_clip(const std::string& path, const ClipTensor& clip) {
  std::string buf;
  buf.reserve(kHeaderBytes + 4 * clip.frames.size());
  buf.append(kMagic, 4);
  bytes::put_u32(buf, kVersion);
  bytes::put_u32(buf, static_cast<uint32_t>(clip.T()));
  bytes::put_u32(buf, static_cast<uint32_t>(clip.C()));
  bytes::put_u32(buf, static_cast<uint32_t>(clip.H()));
  bytes::put_u32(buf, static_cast<uint32_t>(clip.W()));
  for (size_t i = 0; i < clip.frames.size(); ++i) {
    float f = static_cast<float>(clip.frames[i]);
    bytes::put_u32(buf, std::bit_cast<uint32_t>(f));
  }
  bytes::write_file_bytes(path, buf);
}

ClipTensor read_clip(const std::string& path) {
  std::string b = bytes::read_file_bytes(path, ErrorKind::Io);
  check(b.size() >= kHeaderBytes, ErrorKind::Format,
        path + ": truncated header (" + std::to_string(b.size()) + " bytes, need 24)");
  check(std::memcmp(b.data(), kMagic, 4) == 0, ErrorKind::Format,
        path + ": bad magic at offset 0");
  uint32_t version = bytes::get_u32(b, 4);
  check(version == kVersion, ErrorKind::Format,
        path + ": unsupported version " + std::to_string(version) + " at offset 4");
  uint64_t T = bytes::get_u32(b, 8), C = bytes::get_u32(b, 12), H = bytes::get_u32(b, 16), W = bytes::get_u32(b, 20);
  check(T >= 1, ErrorKind::Format, path + ": frame count must be >= 1 (offset 8)");
  check(C >= 1 && H >= 1 && W >= 1, ErrorKind::Format,
        path + ": zero extent in header (offset 12)");
  uint64_t n = T * C;
  check(n <= kMaxElements && n * H <= kMaxElements && n * H * W <= kMaxElements,
        ErrorKind::Format, path + ": dim overflow in header (offset 8)");
  n = T * C * H * W;
  size_t expect = kHeaderBytes + 4 * static_cast<size_t>(n);
  check(b.size() == expect, ErrorKind::Format,
        path + ": payload size mismatch at offset " + std::to_string(kHeaderBytes) + " (have " +
            std::to_string(b.size()) + " bytes, expect " + std::to_string(expect) + ")");
  Tensor frames = Tensor::zeros({static_cast<size_t>(T), static_cast<size_t>(C),
                                 static_cast<size_t>(H), static_cast<size_t>(W)},
                                Dtype::f32);
  double* dst = frames.mutable_data();
  for (size_t i = 0; i < static_cast<size_t>(n); ++i) {
    float f = std::bit_cast<float>(bytes::get_u32(b, kHeaderBytes + 4 * i));
    check(std::isfinite(f), ErrorKind::Format,
          path + ": non-finite pixel at offset " + std::to_string(kHeaderBytes + 4 * i));
    dst[i] = static_cast<double>(f);
  }
  return ClipTensor(std::move(frames));
}

// ---------------------------------------------------------------------------
// manifest

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const char* ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    check(known, ErrorKind::Config, std::string(ctx) + ": unknown key \"" + it.key() + "\"");
  }
}

json generator_config_to_json(const GeneratorConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["clips_per_class"] = c.clips_per_class;
  j["frames"] = c.T;
  j["channels"] = c.C;
  j["height"] = c.H;
  j["width"] = c.W;
  j["face_size"] = c.face_size;
  j["patch"] = c.patch;
  j["ambiguous_fraction"] = c.ambiguous_fraction;
  j["val_fraction"] = c.val_fraction;
  j["noise_std"] = c.noise_std;
  return j;
}

GeneratorConfig generator_config_from_json(const json& j) {
  check(j.is_object(), ErrorKind::Config, "generator config must be an object");
  reject_unknown_keys(j,
                      {"seed", "clips_per_class", "frames", "channels", "height", "width",
                       "face_size", "patch", "ambiguous_fraction", "val_fraction", "noise_std"},
                      "generator config");
  GeneratorConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("clips_per_class")) c.clips_per_class = j.at("clips_per_class").get<int>();
    if (j.contains("frames")) c.T = j.at("frames").get<size_t>();
    if (j.contains("channels")) c.C = j.at("channels").get<size_t>();
    if (j.contains("height")) c.H = j.at("height").get<size_t>();
    if (j.contains("width")) c.W = j.at("width").get<size_t>();
    if (j.contains("face_size")) c.face_size = j.at("face_size").get<size_t>();
    if (j.contains("patch")) c.patch = j.at("patch").get<size_t>();
    if (j.contains("ambiguous_fraction"))
      c.ambiguous_fraction = j.at("ambiguous_fraction").get<double>();
    if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  j["seed"] = m.seed;
  j["rng_algorithm"] = std::string(kRngAlgorithm);
  j["config"] = generator_config_to_json(m.config);
  json clips = json::array();
  for (const ClipRecord& r : m.clips) {
    json c;
    c["clip_id"] = r.clip_id;
    c["emotion"] = r.emotion;
    c["polarity"] = r.polarity;
    c["ambiguous"] = r.ambiguous;
    c["split"] = r.split;
    c["file"] = r.file;
    clips.push_back(std::move(c));
  }
  j["clips"] = std::move(clips);
  bytes::write_file_bytes(path, j.dump(2) + "\n");
}

Manifest load_manifest(const std::string& path) {
  std::string text = bytes::read_file_bytes(path, ErrorKind::Io);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path + ": " + e.what());
  }
  check(j.is_object(), ErrorKind::Format, path + ": manifest must be a JSON object");
  reject_unknown_keys(j, {"seed", "rng_algorithm", "config", "clips"}, "manifest");
  Manifest m;
  try {
    m.seed = j.at("seed").get<uint64_t>();
    m.config = generator_config_from_json(j.at("config"));
    check(j.at("clips").is_array(), ErrorKind::Format, path + ": clips must be an array");
    std::unordered_set<std::string> seen;
    fs::path base = fs::path(path).parent_path();
    for (const json& c : j.at("clips")) {
      ClipRecord r;
      r.clip_id = c.at("clip_id").get<std::string>();
      r.emotion = c.at("emotion").get<int>();
      r.polarity = c.at("polarity").get<int>();
      r.ambiguous = c.at("ambiguous").get<bool>();
      r.split = c.at("split").get<std::string>();
      r.file = c.at("file").get<std::string>();
      check(r.emotion >= 0 && r.emotion < kNumEmotions, ErrorKind::Format,
            path + ": emotion out of range for " + r.clip_id);
      check(r.polarity == polarity_from_emotion(r.emotion), ErrorKind::Format,
            path + ": polarity does not match emotion for " + r.clip_id);
      check(r.split == "train" || r.split == "val", ErrorKind::Format,
            path + ": bad split for " + r.clip_id);
      check(seen.insert(r.clip_id).second, ErrorKind::Format,
            path + ": duplicate clip_id " + r.clip_id);
      check(fs::exists(base / r.file), ErrorKind::Format,
            path + ": missing clip file " + r.file);
      m.clips.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path + ": " + e.what());
  }
  return m;
}

}  // namespace ous
