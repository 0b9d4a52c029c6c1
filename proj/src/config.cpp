#include "ous/config.hpp"

#include "bytes.hpp"
#include "serde.hpp"

using nlohmann::json;

namespace ous {

void TrainConfig::validate() const {
  check(epochs >= 1, ErrorKind::Config, "train config: epochs must be >= 1");
  check(batch >= 1, ErrorKind::Config, "train config: batch must be >= 1");
  check(loss_strategy == "global" || loss_strategy == "ce_only", ErrorKind::Config,
        "train config: loss_strategy must be \"global\" or \"ce_only\"");
  check(gate.alpha > 0.0, ErrorKind::Config, "train config: gate alpha must be positive");
  schedule.validate();
}

void RunConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  check(model.frames == data.T && model.channels == data.C && model.height == data.H &&
            model.width == data.W && model.face_size == data.face_size,
        ErrorKind::Config, "run config: model clip geometry differs from the corpus recipe");
  check(model.vision.patch == data.patch, ErrorKind::Config,
        "run config: corpus patch pledge differs from the vision encoder patch");
}

RunConfig default_run_config() {
  RunConfig c;
  c.model.dtype = Dtype::f64;
  return c;  // struct defaults carry the protocol preset
}

namespace {

json model_config_to_json(const ModelConfig& m) {
  json v;
  v["patch"] = m.vision.patch;
  v["width"] = m.vision.D;
  v["depth"] = m.vision.depth;
  v["heads"] = m.vision.heads;
  v["early_blocks"] = m.vision.early_blocks;

  json e;
  e["aligned_width"] = m.enc.F;
  e["polarity_width"] = m.enc.F_p;
  e["frame_blocks"] = m.enc.frame_blocks;
  e["frame_heads"] = m.enc.frame_heads;
  e["align_kernel"] = m.enc.align_kernel;

  json f;
  f["blocks"] = m.fusion.blocks;
  f["queries"] = m.fusion.n_q;
  f["width"] = m.fusion.D_f;
  f["heads"] = m.fusion.heads;
  f["mlp_hidden"] = m.fusion.mlp_hidden;
  f["init_mu"] = m.fusion.init_mu;
  f["init_sigma"] = m.fusion.init_sigma;
  f["residual"] = m.fusion.residual;

  json t;
  t["prompt_length"] = m.text.M;
  t["width"] = m.text.D_t;
  t["blocks"] = m.text.text_blocks;
  t["heads"] = m.text.text_heads;
  t["tau_init"] = m.text.tau_init;

  json j;
  j["frames"] = m.frames;
  j["channels"] = m.channels;
  j["height"] = m.height;
  j["width"] = m.width;
  j["face_size"] = m.face_size;
  j["vision"] = std::move(v);
  j["encoders"] = std::move(e);
  j["fusion"] = std::move(f);
  j["text"] = std::move(t);
  j["mean_fusion"] = m.mean_fusion;
  j["seed"] = m.seed;
  j["dtype"] = m.dtype == Dtype::f32 ? "float32" : "float64";
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  check(j.is_object(), ErrorKind::Config, "model config must be an object");
  reject_unknown_keys(j,
                      {"frames", "channels", "height", "width", "face_size", "vision", "encoders",
                       "fusion", "text", "mean_fusion", "seed", "dtype"},
                      "model config");
  ModelConfig m;
  try {
    if (j.contains("frames")) m.frames = j.at("frames").get<size_t>();
    if (j.contains("channels")) m.channels = j.at("channels").get<size_t>();
    if (j.contains("height")) m.height = j.at("height").get<size_t>();
    if (j.contains("width")) m.width = j.at("width").get<size_t>();
    if (j.contains("face_size")) m.face_size = j.at("face_size").get<size_t>();
    if (j.contains("vision")) {
      const json& v = j.at("vision");
      reject_unknown_keys(v, {"patch", "width", "depth", "heads", "early_blocks"},
                          "vision config");
      if (v.contains("patch")) m.vision.patch = v.at("patch").get<size_t>();
      if (v.contains("width")) m.vision.D = v.at("width").get<size_t>();
      if (v.contains("depth")) m.vision.depth = v.at("depth").get<size_t>();
      if (v.contains("heads")) m.vision.heads = v.at("heads").get<size_t>();
      if (v.contains("early_blocks")) m.vision.early_blocks = v.at("early_blocks").get<size_t>();
    }
    if (j.contains("encoders")) {
      const json& e = j.at("encoders");
      reject_unknown_keys(
          e, {"aligned_width", "polarity_width", "frame_blocks", "frame_heads", "align_kernel"},
          "encoders config");
      if (e.contains("aligned_width")) m.enc.F = e.at("aligned_width").get<size_t>();
      if (e.contains("polarity_width")) m.enc.F_p = e.at("polarity_width").get<size_t>();
      if (e.contains("frame_blocks")) m.enc.frame_blocks = e.at("frame_blocks").get<size_t>();
      if (e.contains("frame_heads")) m.enc.frame_heads = e.at("frame_heads").get<size_t>();
      if (e.contains("align_kernel")) m.enc.align_kernel = e.at("align_kernel").get<size_t>();
    }
    if (j.contains("fusion")) {
      const json& f = j.at("fusion");
      reject_unknown_keys(
          f, {"blocks", "queries", "width", "heads", "mlp_hidden", "init_mu", "init_sigma",
              "residual"},
          "fusion config");
      if (f.contains("blocks")) m.fusion.blocks = f.at("blocks").get<size_t>();
      if (f.contains("queries")) m.fusion.n_q = f.at("queries").get<size_t>();
      if (f.contains("width")) m.fusion.D_f = f.at("width").get<size_t>();
      if (f.contains("heads")) m.fusion.heads = f.at("heads").get<size_t>();
      if (f.contains("mlp_hidden")) m.fusion.mlp_hidden = f.at("mlp_hidden").get<size_t>();
      if (f.contains("init_mu")) m.fusion.init_mu = f.at("init_mu").get<double>();
      if (f.contains("init_sigma")) m.fusion.init_sigma = f.at("init_sigma").get<double>();
      if (f.contains("residual")) m.fusion.residual = f.at("residual").get<bool>();
    }
    if (j.contains("text")) {
      const json& t = j.at("text");
      reject_unknown_keys(t, {"prompt_length", "width", "blocks", "heads", "tau_init"},
                          "text config");
      if (t.contains("prompt_length")) m.text.M = t.at("prompt_length").get<size_t>();
      if (t.contains("width")) m.text.D_t = t.at("width").get<size_t>();
      if (t.contains("blocks")) m.text.text_blocks = t.at("blocks").get<size_t>();
      if (t.contains("heads")) m.text.text_heads = t.at("heads").get<size_t>();
      if (t.contains("tau_init")) m.text.tau_init = t.at("tau_init").get<double>();
    }
    if (j.contains("mean_fusion")) m.mean_fusion = j.at("mean_fusion").get<bool>();
    if (j.contains("seed")) m.seed = j.at("seed").get<uint64_t>();
    if (j.contains("dtype")) {
      const std::string dt = j.at("dtype").get<std::string>();
      check(dt == "float32" || dt == "float64", ErrorKind::Config,
            "model config: dtype must be \"float32\" or \"float64\"");
      m.dtype = dt == "float32" ? Dtype::f32 : Dtype::f64;
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("model config: ") + e.what());
  }
  return m;
}

json train_config_to_json(const TrainConfig& t) {
  json s;
  s["lr"] = t.schedule.lr;
  s["patience"] = t.schedule.patience;
  s["decay"] = t.schedule.decay;
  s["lr_floor"] = t.schedule.lr_floor;
  s["overfit_guard"] = t.schedule.overfit_guard;

  json j;
  j["epochs"] = t.epochs;
  j["batch"] = t.batch;
  j["seed"] = t.seed;
  j["loss_strategy"] = t.loss_strategy;
  j["zero_scene"] = t.zero_scene;
  j["schedule"] = std::move(s);
  j["gate"] = json{{"alpha", t.gate.alpha}};
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  check(j.is_object(), ErrorKind::Config, "train config must be an object");
  reject_unknown_keys(
      j, {"epochs", "batch", "seed", "loss_strategy", "zero_scene", "schedule", "gate"},
      "train config");
  TrainConfig t;
  try {
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<size_t>();
    if (j.contains("batch")) t.batch = j.at("batch").get<size_t>();
    if (j.contains("seed")) t.seed = j.at("seed").get<uint64_t>();
    if (j.contains("loss_strategy")) t.loss_strategy = j.at("loss_strategy").get<std::string>();
    if (j.contains("zero_scene")) t.zero_scene = j.at("zero_scene").get<bool>();
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      reject_unknown_keys(s, {"lr", "patience", "decay", "lr_floor", "overfit_guard"},
                          "schedule config");
      if (s.contains("lr")) t.schedule.lr = s.at("lr").get<double>();
      if (s.contains("patience")) t.schedule.patience = s.at("patience").get<int>();
      if (s.contains("decay")) t.schedule.decay = s.at("decay").get<double>();
      if (s.contains("lr_floor")) t.schedule.lr_floor = s.at("lr_floor").get<double>();
      if (s.contains("overfit_guard"))
        t.schedule.overfit_guard = s.at("overfit_guard").get<double>();
    }
    if (j.contains("gate")) {
      const json& g = j.at("gate");
      reject_unknown_keys(g, {"alpha"}, "gate config");
      if (g.contains("alpha")) t.gate.alpha = g.at("alpha").get<double>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("train config: ") + e.what());
  }
  return t;
}

}  // namespace

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["data"] = generator_config_to_json(c.data);
  j["model"] = model_config_to_json(c.model);
  j["train"] = train_config_to_json(c.train);
  j["out_dir"] = c.out_dir;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  check(j.is_object(), ErrorKind::Config, "run config must be a JSON object");
  reject_unknown_keys(j, {"data", "model", "train", "out_dir"}, "run config");
  RunConfig c;
  try {
    if (j.contains("data")) c.data = generator_config_from_json(j.at("data"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_run_config(const RunConfig& c, const std::string& path) {
  bytes::write_file_bytes(path, run_config_to_json(c));
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(bytes::read_file_bytes(path, ErrorKind::Config));
}

}  // namespace ous
