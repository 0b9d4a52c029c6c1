#include "ous/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <unordered_set>

#include "json.hpp"
#include "ous/checkpoint.hpp"
#include "ous/evaluation.hpp"
#include "ous/objectives.hpp"
#include "ous/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ous {

namespace {

ParamFilter member_filter(const ParamList& group) {
  auto members = std::make_shared<std::unordered_set<const Parameter*>>();
  for (const ParamPtr& p : group) members->insert(p.get());
  return [members](const Parameter& p) { return members->count(&p) > 0; };
}

void fisher_yates(std::vector<size_t>& v, SplitMix64& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.next() % i]);
}

json step_json(const StepRecord& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["L_polarity"] = r.L_polarity;
  j["L_similarity"] = r.L_similarity;
  j["L_contrast"] = r.L_contrast;
  j["L_global"] = r.L_global;
  j["gate_active"] = r.gate_active;
  j["lr"] = r.lr;
  return j;
}

json epoch_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["train_acc"] = r.train_acc;
  j["val_loss"] = r.val_loss;
  j["val_UAR"] = r.val_uar;
  j["val_WAR"] = r.val_war;
  j["lr"] = r.lr;
  j["flags"] = r.flags;
  return j;
}

long argmax_hits(const Tensor& logits, const std::vector<int>& labels) {
  const size_t B = logits.extent(0);
  const size_t K = logits.extent(1);
  long hits = 0;
  for (size_t b = 0; b < B; ++b) {
    size_t best = 0;
    for (size_t k = 1; k < K; ++k)
      if (logits[b * K + k] > logits[b * K + best]) best = k;
    if (static_cast<int>(best) == labels[b]) ++hits;
  }
  return hits;
}

}  // namespace

TrainResult train_model(Model& model, const FeatureCache& cache, const Manifest& manifest,
                        const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& config_echo, std::ostream* progress) {
  cfg.validate();
  check(cache.clips.size() == manifest.clips.size(), ErrorKind::Contract,
        "train: cache and manifest disagree");

  std::vector<size_t> train_idx;
  for (size_t i = 0; i < manifest.clips.size(); ++i)
    if (manifest.clips[i].split == "train") train_idx.push_back(i);
  check(!train_idx.empty(), ErrorKind::Contract, "train: no training clips in manifest");

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  check(metrics.good(), ErrorKind::Io, "cannot open " + metrics_path + " for writing");

  const ParamList trainable = model.trainable_params();
  const ParamFilter all_trainable = member_filter(trainable);
  const ParamFilter similarity_only = member_filter(model.similarity_params());
  const ParamFilter polarity_only = member_filter(model.polarity_params());
  const bool gated_strategy = cfg.loss_strategy == "global";

  Adam opt;
  ScheduleState sched = schedule_init(cfg.schedule);
  SplitMix64 shuffle_rng(substream_seed(cfg.seed, "shuffle"));

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  double prev_global = std::numeric_limits<double>::infinity();
  long step = 0;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = train_idx;
    fisher_yates(order, shuffle_rng);
    const double epoch_lr = sched.lr;
    long epoch_hits = 0;

    for (size_t at = 0; at < order.size(); at += cfg.batch) {
      const size_t take = std::min(cfg.batch, order.size() - at);
      std::vector<size_t> idx(order.begin() + at, order.begin() + at + take);
      std::vector<int> emotions, polarities;
      for (size_t i : idx) {
        emotions.push_back(manifest.clips[i].emotion);
        polarities.push_back(manifest.clips[i].polarity);
      }

      ++step;
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = sched.lr;

      try {
        Tape t(model.cfg.dtype);
        BatchInputs in = batch_inputs(t, cache, idx, model.cfg, cfg.zero_scene);
        ModelOutput out = model.forward(t, in);

        Var l_pol = polarity_loss(out.pol_logits, polarities);
        Var l_sim = similarity_loss(out.v_ft, out.v_st);
        Var l_con = cross_entropy(out.logits, emotions);
        rec.L_polarity = l_pol.val().item();
        rec.L_similarity = l_sim.val().item();
        rec.L_contrast = l_con.val().item();

        for (const ParamPtr& p : model.params()) p->zero_grad();
        if (gated_strategy) {
          GatedLoss g = global_loss(l_pol, l_sim, l_con, cfg.gate, prev_global);
          rec.gate_active = g.gate_active;
          rec.L_global = g.loss.val().item();
          if (g.gate_active) {
            t.backward(l_pol, polarity_only);
            t.backward(l_sim, similarity_only);
          }
          t.backward(l_con, all_trainable);
        } else {
          rec.gate_active = false;
          rec.L_global = rec.L_contrast;
          t.backward(l_con, all_trainable);
        }
        prev_global = rec.L_global;

        epoch_hits += argmax_hits(out.logits.val(), emotions);
        opt.step(trainable, sched.lr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        res.aborted = true;
        res.abort_reason = "non-finite value at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + "): " + e.what();
        json j;
        j["abort"] = res.abort_reason;
        j["step"] = step;
        j["epoch"] = epoch;
        metrics << j.dump() << "\n";
        metrics.flush();
        return res;
      }

      res.steps.push_back(rec);
      metrics << step_json(rec).dump() << "\n";
    }

    EvalResult val = evaluate_split(model, cache, manifest, "val", cfg.batch, cfg.zero_scene);

    EpochRecord er;
    er.epoch = epoch;
    er.train_acc =
        static_cast<double>(epoch_hits) / static_cast<double>(order.size());
    er.val_loss = val.mean_loss;
    er.val_uar = val.metrics.uar;
    er.val_war = val.metrics.war;
    er.lr = epoch_lr;

    const int decays_before = sched.decay_events;
    schedule_update(sched, cfg.schedule, val.mean_loss, er.train_acc);
    if (sched.decay_events > decays_before) er.flags.push_back("decayed");
    if (sched.converged) er.flags.push_back("converged");
    if (sched.overfit) er.flags.push_back("overfit");

    if (val.mean_loss < res.best_val_loss) {
      res.best_val_loss = val.mean_loss;
      res.best_epoch = epoch;
      save_checkpoint(make_checkpoint(model.params(), config_echo,
                                      static_cast<long>(epoch), val.mean_loss),
                      (fs::path(out_dir) / "best.ckpt").string());
    }

    res.epochs.push_back(er);
    metrics << epoch_json(er).dump() << "\n";
    metrics.flush();

    if (progress) {
      *progress << "epoch " << epoch << "/" << cfg.epochs << "  train_acc "
                << er.train_acc << "  val_loss " << er.val_loss << "  val_UAR " << er.val_uar
                << "  lr " << er.lr;
      for (const std::string& f : er.flags) *progress << "  [" << f << "]";
      *progress << "\n";
    }

    if (sched.should_stop()) break;
  }

  const EpochRecord& last = res.epochs.back();
  save_checkpoint(make_checkpoint(model.params(), config_echo,
                                  static_cast<long>(last.epoch), last.val_loss),
                  (fs::path(out_dir) / "last.ckpt").string());
  return res;
}

}  // namespace ous
