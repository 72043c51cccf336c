#pragma once

// Training loop (AdamW + cosine warmup schedule, JSON-lines step log,
// best-validation checkpointing) and model evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "temba/checkpoint.hpp"
#include "temba/data.hpp"
#include "temba/log.hpp"
#include "temba/metrics.hpp"
#include "temba/model.hpp"
#include "temba/objectives.hpp"
#include "temba/optim.hpp"

namespace temba {

struct TrainConfig {
  double lr = 4.5e-4;
  double weight_decay = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t warmup_epochs = 5;
  std::size_t total_epochs = 140;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  bool truncate = false;

  // Supplementary-table presets.
  static TrainConfig tsu() { return {}; }
  static TrainConfig charades() {
    TrainConfig c;
    c.lr = 2.5e-4;
    c.batch_size = 5;
    c.total_epochs = 30;
    return c;
  }

  void validate() const {
    require(lr > 0.0, "train.lr must be positive");
    require(weight_decay >= 0.0, "train.weight_decay must be >= 0");
    require(warmup_epochs < total_epochs, "train.warmup_epochs must be < train.total_epochs");
    require(batch_size >= 1, "train.batch_size must be >= 1");
    require(eval_every >= 1, "train.eval_every must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"betas", {c.beta1, c.beta2}},
                     {"warmup_epochs", c.warmup_epochs},
                     {"total_epochs", c.total_epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"eval_every", c.eval_every},
                     {"truncate", c.truncate}};
}

inline void merge_json(const nlohmann::json& j, TrainConfig& c) {
  require(j.is_object(), "train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "lr") c.lr = v.get<double>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "betas") {
      const auto b = v.get<std::vector<double>>();
      require(b.size() == 2, "train.betas must have two entries");
      c.beta1 = b[0];
      c.beta2 = b[1];
    } else if (key == "warmup_epochs") c.warmup_epochs = v.get<std::size_t>();
    else if (key == "total_epochs") c.total_epochs = v.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
    else if (key == "truncate") c.truncate = v.get<bool>();
    else throw ContractViolation("unknown train config key '" + key + "'");
  }
}

// Which head to score: the main head, or auxiliary head of block k (1-based).
struct HeadSelect {
  std::size_t aux_block = 0;  // 0 = main head
};

// Per-video probabilities (detection) or scores (summarization) over the
// video's real frames, T x width.
template <typename S>
std::vector<double> predict(const Model<S>& model, const LabeledSequence& seq, bool truncate = false,
                            HeadSelect head = {}) {
  NoGradGuard no_grad;
  const auto& cfg = model.config();
  const auto batch = pad_batch<S>({&seq}, cfg.t_pad, cfg.mode, truncate);
  const auto out = model.forward(batch.features, &batch.mask);
  Tensor<S> logits = out.logits;
  if (head.aux_block) {
    require(head.aux_block <= out.aux_logits.size(), "predict: no auxiliary head for block " + std::to_string(head.aux_block));
    logits = out.aux_logits[head.aux_block - 1];
  }
  const std::size_t w = logits.shape()[2], len = batch.lengths[0];
  std::vector<double> res(len * w);
  for (std::size_t i = 0; i < len * w; ++i) {
    const double z = static_cast<double>(logits[i]);
    res[i] = cfg.mode == Mode::detection ? ops::detail::sigmoid_scalar(z) : z;
  }
  return res;
}

template <typename S>
MetricReport evaluate(const Model<S>& model, const std::vector<LabeledSequence>& seqs, bool truncate = false,
                      HeadSelect head = {}) {
  require(!seqs.empty(), "evaluate: no videos");
  const auto& cfg = model.config();
  MetricReport rep;
  rep.mode = cfg.mode;
  rep.videos = seqs.size();
  if (cfg.mode == Mode::detection) {
    const std::size_t c = cfg.num_classes;
    std::vector<double> probs, labels, mask;
    std::vector<VideoScores> per_video;
    for (const auto& s : seqs) {
      require(s.doc.classes.size() == c, "evaluate: video " + s.id + " has a different class count");
      auto p = predict(model, s, truncate, head);
      const std::size_t len = p.size() / c;
      const auto fl = labels_from_annotations(s.doc, len);
      probs.insert(probs.end(), p.begin(), p.end());
      labels.insert(labels.end(), fl.labels.begin(), fl.labels.end());
      mask.insert(mask.end(), fl.mask.begin(), fl.mask.end());
      if (len == s.doc.num_segments) per_video.push_back({std::move(p), &s.doc});
    }
    rep.ap = frame_map(probs, labels, mask, c);
    rep.buckets = duration_bucket_map(per_video, c);
  } else {
    double tau = 0, rho = 0;
    std::size_t nt = 0, nr = 0;
    for (const auto& s : seqs) {
      const auto p = predict(model, s, truncate, head);
      const std::vector<double> truth(s.doc.importance.begin(), s.doc.importance.begin() + static_cast<std::ptrdiff_t>(p.size()));
      const auto rc = rank_correlations(p, truth);
      if (rc.kendall_tau) tau += *rc.kendall_tau, ++nt;
      if (rc.spearman_rho) rho += *rc.spearman_rho, ++nr;
    }
    if (nt) rep.kendall_tau = tau / static_cast<double>(nt);
    if (nr) rep.spearman_rho = rho / static_cast<double>(nr);
  }
  return rep;
}

// Selection score for best-checkpoint retention.
inline double selection_score(const MetricReport& r) {
  return r.mode == Mode::detection ? r.ap.map : r.kendall_tau.value_or(-1.0);
}

inline nlohmann::json step_log_line(std::size_t step, double lr, const LossReport& r) {
  return {{"step", step},
          {"lr", lr},
          {"bce", r.bce},
          {"cons", opt_json(r.cons)},
          {"aux_mean", opt_json(r.aux_mean)},
          {"total", r.total}};
}

struct TrainResult {
  double best_score = -1.0;
  std::size_t best_epoch = 0;
  double final_loss = 0.0;
  std::size_t steps = 0;
  std::vector<LossReport> history;  // one per step
};

struct TrainOutputs {
  std::filesystem::path out_dir;  // empty: keep nothing on disk
  bool keep_history = true;
};

// Trains in place. Writes train_log.jsonl, metrics_epoch_<e>.json,
// best.tmbw and last.tmbw under out_dir when given. A numeric fault aborts
// the run after writing last_good.tmbw with the pre-fault parameters.
template <typename S>
TrainResult train(Model<S>& model, const std::vector<LabeledSequence>& train_set,
                  const std::vector<LabeledSequence>& val_set, const TrainConfig& cfg, const TrainOutputs& outputs = {}) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training split");
  const auto& mcfg = model.config();
  const auto loss_cfg = LossConfig::from_model(mcfg);
  const auto named = model.named_parameters();
  std::vector<Tensor<S>> params;
  std::vector<std::string> names;
  for (const auto& [n, t] : named) {
    names.push_back(n);
    params.push_back(t);
  }
  AdamW<S> opt(params, names, {cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});
  Rng rng(cfg.seed);

  const bool to_disk = !outputs.out_dir.empty();
  std::ofstream log_file;
  if (to_disk) {
    std::filesystem::create_directories(outputs.out_dir);
    log_file.open(outputs.out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot open training log in '" + outputs.out_dir.string() + "'");
  }
  TrainResult res;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = cosine_warmup_lr(static_cast<double>(epoch), cfg.lr, cfg.warmup_epochs, cfg.total_epochs);
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const LabeledSequence*> items;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        items.push_back(&train_set[order[i]]);
      try {
        const auto batch = pad_batch<S>(items, mcfg.t_pad, mcfg.mode, cfg.truncate);
        const auto out = model.forward(batch.features, &batch.mask);
        const auto obj = compute_objective(model, out, batch.targets, batch.mask, loss_cfg);
        model.zero_grad();
        backward(obj.total);
        opt.step(lr);
        ++res.steps;
        epoch_loss += obj.report.total;
        ++epoch_steps;
        res.final_loss = obj.report.total;
        if (outputs.keep_history) res.history.push_back(obj.report);
        if (to_disk) log_file << step_log_line(res.steps, lr, obj.report).dump() << '\n';
      } catch (const NumericFault& e) {
        if (to_disk) {
          log_file.flush();
          save_checkpoint(outputs.out_dir / "last_good.tmbw", model);
        }
        throw NumericFault(std::string("training diverged at step ") + std::to_string(res.steps + 1) + ": " + e.what());
      }
    }
    log::info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.total_epochs) +
              " lr=" + std::to_string(lr) + " mean_loss=" + std::to_string(epoch_loss / std::max<std::size_t>(1, epoch_steps)));

    const bool last_epoch = epoch + 1 == cfg.total_epochs;
    if (!val_set.empty() && ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
      const auto rep = evaluate(model, val_set, cfg.truncate);
      const double score = selection_score(rep);
      log::info("  val score=" + std::to_string(score));
      if (to_disk) {
        auto j = to_json(rep);
        j["epoch"] = epoch + 1;
        io::write_json(outputs.out_dir / ("metrics_epoch_" + std::to_string(epoch + 1) + ".json"), j);
      }
      if (score > res.best_score) {
        res.best_score = score;
        res.best_epoch = epoch + 1;
        if (to_disk) save_checkpoint(outputs.out_dir / "best.tmbw", model);
      }
    }
  }
  if (to_disk) save_checkpoint(outputs.out_dir / "last.tmbw", model);
  return res;
}

}  // namespace temba
