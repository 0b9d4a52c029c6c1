#include "ous/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "ous/common.hpp"
#include "ous/evaluation.hpp"
#include "ous/model.hpp"
#include "ous/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ous {

namespace {

template <typename T>
void require_unique(const std::vector<T>& v, const std::string& what) {
  std::set<T> seen(v.begin(), v.end());
  check(seen.size() == v.size(), ErrorKind::Config,
        "ablation: duplicate entries in \"" + what + "\"");
}

std::string setting_id_of(size_t blocks, size_t length, const std::string& strategy,
                          const std::string& fusion) {
  return "b" + std::to_string(blocks) + "_m" + std::to_string(length) + "_" + strategy + "_" +
         fusion;
}

struct Cell {
  size_t row = 0;
  size_t blocks = 0;
  size_t length = 0;
  std::string strategy;
  std::string fusion;
  uint64_t seed = 0;
};

// Fills in everything but status; status stays empty on success so the
// caller can distinguish fresh results from cached ones.
void train_cell(const Cell& c, const RunConfig& base, const FeatureCache& cache,
                const Manifest& manifest, const std::string& cell_dir, AblationRow& row) {
  RunConfig rc = base;
  rc.model.seed = c.seed;
  rc.train.seed = c.seed;
  rc.model.fusion.blocks = c.blocks;
  rc.model.text.M = c.length;
  rc.train.loss_strategy = c.strategy;
  rc.model.mean_fusion = (c.fusion == "mean_pool");
  rc.out_dir = cell_dir;
  rc.validate();

  Model model = Model::make(rc.model);
  TrainResult tr = train_model(model, cache, manifest, rc.train, cell_dir,
                               run_config_to_json(rc));
  if (tr.aborted) fail(ErrorKind::Numeric, tr.abort_reason);

  const EpochRecord& best = tr.epochs.at(static_cast<size_t>(tr.best_epoch) - 1);
  row.uar = best.val_uar;
  row.war = best.val_war;
  row.best_epoch = tr.best_epoch;

  json out = {{"setting_id", row.setting_id}, {"seed", row.seed},     {"UAR", row.uar},
              {"WAR", row.war},               {"best_epoch", row.best_epoch}};
  std::ofstream f(cell_dir + "/result.json");
  f << out.dump(2) << "\n";
  check(f.good(), ErrorKind::Io, "ablation: cannot write " + cell_dir + "/result.json");
}

// True when the cell directory already holds a readable result; fills the
// metric columns from it.
bool load_cached(const std::string& cell_dir, AblationRow& row) {
  std::ifstream f(cell_dir + "/result.json");
  if (!f.is_open()) return false;
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return false;  // incomplete write: retrain
  if (!j.contains("UAR") || !j.contains("WAR") || !j.contains("best_epoch")) return false;
  if (!j["UAR"].is_number() || !j["WAR"].is_number() ||
      !j["best_epoch"].is_number_integer())
    return false;
  row.uar = j["UAR"].get<double>();
  row.war = j["WAR"].get<double>();
  row.best_epoch = j["best_epoch"].get<long>();
  return true;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void AblationAxes::validate() const {
  check(!tfe_blocks.empty(), ErrorKind::Config, "ablation grid: axis \"tfe_blocks\" is empty");
  check(!prompt_length.empty(), ErrorKind::Config,
        "ablation grid: axis \"prompt_length\" is empty");
  check(!loss_strategy.empty(), ErrorKind::Config,
        "ablation grid: axis \"loss_strategy\" is empty");
  check(!fusion.empty(), ErrorKind::Config, "ablation grid: axis \"fusion\" is empty");
  for (size_t b : tfe_blocks)
    check(b >= 1, ErrorKind::Config, "ablation grid: tfe_blocks entries must be >= 1");
  for (size_t m : prompt_length)
    check(m >= 1, ErrorKind::Config, "ablation grid: prompt_length entries must be >= 1");
  for (const std::string& s : loss_strategy)
    check(s == "ce_only" || s == "global", ErrorKind::Config,
          "ablation grid: loss_strategy entries must be \"ce_only\" or \"global\"");
  for (const std::string& s : fusion)
    check(s == "tfe" || s == "mean_pool", ErrorKind::Config,
          "ablation grid: fusion entries must be \"tfe\" or \"mean_pool\"");
  require_unique(tfe_blocks, "tfe_blocks");
  require_unique(prompt_length, "prompt_length");
  require_unique(loss_strategy, "loss_strategy");
  require_unique(fusion, "fusion");
}

AblationAxes axes_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  check(!j.is_discarded(), ErrorKind::Config, "ablation grid: not valid JSON");
  check(j.is_object(), ErrorKind::Config, "ablation grid: top level must be an object");

  AblationAxes axes;
  for (const auto& [key, value] : j.items()) {
    check(key == "tfe_blocks" || key == "prompt_length" || key == "loss_strategy" ||
              key == "fusion",
          ErrorKind::Config, "ablation grid: unknown axis \"" + key + "\"");
    check(value.is_array(), ErrorKind::Config,
          "ablation grid: axis \"" + key + "\" must be an array");
    if (key == "tfe_blocks" || key == "prompt_length") {
      std::vector<size_t> out;
      for (const auto& e : value) {
        check(e.is_number_integer() && e.get<long long>() >= 1, ErrorKind::Config,
              "ablation grid: axis \"" + key + "\" entries must be positive integers");
        out.push_back(e.get<size_t>());
      }
      (key == "tfe_blocks" ? axes.tfe_blocks : axes.prompt_length) = std::move(out);
    } else {
      std::vector<std::string> out;
      for (const auto& e : value) {
        check(e.is_string(), ErrorKind::Config,
              "ablation grid: axis \"" + key + "\" entries must be strings");
        out.push_back(e.get<std::string>());
      }
      (key == "loss_strategy" ? axes.loss_strategy : axes.fusion) = std::move(out);
    }
  }
  axes.validate();
  return axes;
}

AblationAxes load_axes(const std::string& path) {
  std::ifstream f(path);
  check(f.is_open(), ErrorKind::Io, "ablation grid: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return axes_from_json(text);
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const Manifest& manifest,
                                      const std::string& corpus_dir, const AblationAxes& axes,
                                      const std::vector<uint64_t>& seeds,
                                      const std::string& out_dir, std::ostream* progress) {
  base.validate();
  axes.validate();
  check(!seeds.empty(), ErrorKind::Config, "ablation: need at least one seed");
  require_unique(seeds, "seeds");

  // Frozen features depend only on the seed (the vision tower is identical
  // across cells), so each seed's cells share one cache.
  std::map<uint64_t, FeatureCache> caches;
  for (uint64_t seed : seeds) {
    ModelConfig mc = base.model;
    mc.seed = seed;
    caches.emplace(seed, build_feature_cache(Model::make(mc), manifest, corpus_dir));
  }

  std::vector<Cell> cells;
  std::vector<AblationRow> rows;
  for (uint64_t seed : seeds)
    for (size_t b : axes.tfe_blocks)
      for (size_t m : axes.prompt_length)
        for (const std::string& strategy : axes.loss_strategy)
          for (const std::string& fusion : axes.fusion) {
            Cell c{rows.size(), b, m, strategy, fusion, seed};
            AblationRow row;
            row.setting_id = setting_id_of(b, m, strategy, fusion);
            row.tfe_blocks = b;
            row.prompt_length = m;
            row.loss_strategy = strategy;
            row.fusion = fusion;
            row.seed = seed;
            cells.push_back(c);
            rows.push_back(row);
          }

  fs::create_directories(fs::path(out_dir) / "cells");

  std::mutex progress_mu;
  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& c = cells[i];
      AblationRow& row = rows[c.row];
      std::string cell_dir =
          (fs::path(out_dir) / "cells" / (row.setting_id + "_s" + std::to_string(c.seed)))
              .string();
      if (load_cached(cell_dir, row)) {
        row.status = "cached";
      } else {
        try {
          fs::create_directories(cell_dir);
          train_cell(c, base, caches.at(c.seed), manifest, cell_dir, row);
          row.status = "ok";
        } catch (const std::exception& e) {
          row.status = std::string("failed: ") + e.what();
        }
      }
      size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        *progress << "[" << finished << "/" << cells.size() << "] " << row.setting_id << " seed "
                  << c.seed << ": " << row.status << "\n";
      }
    }
  };

  unsigned workers = std::min<size_t>(worker_threads(), cells.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path);
  check(f.is_open(), ErrorKind::Io, "ablation: cannot write " + path);
  f << "setting_id,tfe_blocks,prompt_length,loss_strategy,fusion,seed,UAR,WAR,best_epoch,"
       "status\n";
  for (const AblationRow& r : rows) {
    f << csv_field(r.setting_id) << "," << r.tfe_blocks << "," << r.prompt_length << ","
      << r.loss_strategy << "," << r.fusion << "," << r.seed << "," << fixed6(r.uar) << ","
      << fixed6(r.war) << "," << r.best_epoch << "," << csv_field(r.status) << "\n";
  }
  check(f.good(), ErrorKind::Io, "ablation: cannot write " + path);
}

}  // namespace ous
