#pragma once

#include <string>

#include "ous/model.hpp"
#include "ous/objectives.hpp"

namespace ous {

struct TrainConfig {
  size_t epochs = 60;
  size_t batch = 16;
  uint64_t seed = 1;                     // shuffle order; model init seed lives in ModelConfig
  std::string loss_strategy = "global";  // "global" (gated three-term) or "ce_only"
  bool zero_scene = false;               // face-only ablation: blank the scene stream
  ScheduleConfig schedule;
  GateConfig gate;

  void validate() const;
};

// One experiment, end to end: corpus recipe, network, training protocol, and
// where the artifacts go. Round-trips losslessly through its JSON file form;
// unknown keys are rejected.
struct RunConfig {
  GeneratorConfig data;
  ModelConfig model;
  TrainConfig train;
  std::string out_dir = "run";

  // Stage validation plus the geometry cross-check: the network's clip
  // geometry must equal the corpus recipe's.
  void validate() const;
};

// The training-protocol preset: 12 fusion blocks, prompt length 64, batch 16,
// initial learning rate 0.002, 60 epochs.
RunConfig default_run_config();

std::string run_config_to_json(const RunConfig& c);
RunConfig run_config_from_json(const std::string& text);

void save_run_config(const RunConfig& c, const std::string& path);
RunConfig load_run_config(const std::string& path);

}  // namespace ous
