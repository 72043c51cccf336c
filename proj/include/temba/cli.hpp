#pragma once

// `temba` command-line driver: synth, train, eval, gradcheck, bench.
// Exit codes: 0 ok, 1 validation error, 2 numeric fault, 3 I/O or format error.

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include "temba/bench.hpp"
#include "temba/checkpoint.hpp"
#include "temba/config.hpp"
#include "temba/log.hpp"
#include "temba/toy.hpp"
#include "temba/train.hpp"

namespace temba::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kNumeric = 2, kIo = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string features_dir, annotations_dir, manifest;
  bool truncate = false;
  std::string mode;
  bool no_dilation = false, no_fuser = false, no_cons = false, no_aux = false;
  std::string fuser_variant;
  std::optional<std::size_t> blocks;
  std::string precision;

  // subcommand-specific
  std::string checkpoint, split = "val";
  std::size_t aux_block = 0;
  double h = kModelGradStep, tol = 1e-4;
  std::size_t runs = 5;
  std::vector<std::size_t> lengths{512, 1024, 2048, 4096};
};

inline void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run config (unknown keys rejected)");
  app->add_option("--seed", f.seed, "Seed for data, initialization and shuffling");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--features-dir", f.features_dir, "Directory of <id>.tmbf feature files");
  app->add_option("--annotations-dir", f.annotations_dir, "Directory of <id>.json annotations");
  app->add_option("--manifest", f.manifest, "manifest.json with train/val id lists");
  app->add_flag("--truncate", f.truncate, "Keep the first T_pad frames of longer videos instead of failing");
  app->add_option("--mode", f.mode, "detection | summarization")->check(CLI::IsMember({"detection", "summarization"}));
  app->add_flag("--no-dilation", f.no_dilation, "Use eta = 1 in every block");
  app->add_flag("--no-fuser", f.no_fuser, "Put the head directly on the last block");
  app->add_flag("--no-cons", f.no_cons, "Drop the consistency loss");
  app->add_flag("--no-aux", f.no_aux, "Drop the auxiliary losses");
  app->add_option("--fuser-variant", f.fuser_variant, "sum+proj | sum+proj+ssm | concat+proj | concat+proj+ssm");
  app->add_option("--blocks", f.blocks, "Number of Temba blocks K")->check(CLI::PositiveNumber);
  app->add_option("--precision", f.precision, "float32 | float64");
}

// Config file first, then flags on top.
inline RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = load_run_config(f.config);
  if (!f.mode.empty()) {
    c.mode = parse_mode(f.mode);
    c.sync();
  }
  if (!f.precision.empty()) c.precision = parse_precision(f.precision);
  if (f.seed) {
    c.model.seed = *f.seed;
    c.train.seed = *f.seed;
    if (c.synth) c.synth->seed = *f.seed;
  }
  if (!f.out.empty()) c.paths.out_dir = f.out;
  if (!f.features_dir.empty()) c.paths.features_dir = f.features_dir;
  if (!f.annotations_dir.empty()) c.paths.annotations_dir = f.annotations_dir;
  if (!f.manifest.empty()) c.paths.manifest = f.manifest;
  if (f.truncate) c.train.truncate = true;
  if (f.no_dilation) c.model.use_dilation = false;
  if (f.no_fuser) c.model.use_fuser = false;
  if (f.no_cons) c.model.use_cons_loss = false;
  if (f.no_aux) c.model.use_aux_loss = false;
  if (!f.fuser_variant.empty()) c.model.fuser_variant = parse_fuser_variant(f.fuser_variant);
  if (f.blocks) c.model.blocks = *f.blocks;
  return c;
}

inline void echo_config(const RunConfig& c) {
  io::write_json(std::filesystem::path(c.paths.out_dir) / "config.resolved.json", to_json(c));
}

template <typename Fn>
decltype(auto) with_precision(Precision p, Fn&& fn) {
  if (p == Precision::f64) return fn(double{});
  return fn(float{});
}

inline std::vector<LabeledSequence> load_named_split(const RunConfig& c, const std::string& split) {
  require(!c.paths.manifest.empty(), "no manifest given (use --manifest or paths.manifest)");
  const Manifest m = io::read_json(c.paths.manifest).get<Manifest>();
  require(split == "train" || split == "val", "split must be train or val");
  return load_split(c.paths.dataset(), split == "train" ? m.train : m.val);
}

// Model width and class count follow the data.
inline void fit_to_data(ModelConfig& mc, const std::vector<LabeledSequence>& data) {
  require(!data.empty(), "dataset split is empty");
  mc.input_dim = data.front().features.d;
  if (mc.mode == Mode::detection) mc.num_classes = data.front().doc.classes.size();
}

inline int cmd_synth(const Flags& f) {
  RunConfig c = resolve(f);
  if (!c.synth) {
    c.synth = SynthSpec{};
    c.sync();
    if (f.seed) c.synth->seed = *f.seed;
  }
  c.synth->validate();
  const auto m = synth_generate(*c.synth, c.paths.out_dir);
  echo_config(c);
  std::cout << "wrote " << m.train.size() << " train / " << m.val.size() << " val videos to " << c.paths.out_dir
            << "\n";
  return kOk;
}

inline int cmd_train(const Flags& f) {
  RunConfig c = resolve(f);
  const auto train_set = load_named_split(c, "train");
  const auto val_set = load_named_split(c, "val");
  fit_to_data(c.model, train_set);
  c.model.validate();
  c.train.validate();
  echo_config(c);
  return with_precision(c.precision, [&](auto tag) {
    using S = decltype(tag);
    Model<S> model(c.model);
    log::info("model parameters: " + std::to_string(model.parameter_count()));
    const auto res = train(model, train_set, val_set, c.train, {c.paths.out_dir, false});
    const nlohmann::json summary{{"steps", res.steps},
                                 {"final_loss", res.final_loss},
                                 {"best_score", res.best_score},
                                 {"best_epoch", res.best_epoch},
                                 {"parameters", model.parameter_count()}};
    io::write_json(std::filesystem::path(c.paths.out_dir) / "train_summary.json", summary);
    std::cout << summary.dump(2) << "\n";
    return static_cast<int>(kOk);
  });
}

inline int cmd_eval(const Flags& f) {
  RunConfig c = resolve(f);
  const std::filesystem::path ckpt =
      f.checkpoint.empty() ? std::filesystem::path(c.paths.out_dir) / "best.tmbw" : std::filesystem::path(f.checkpoint);
  const auto data = load_named_split(c, f.split);
  return with_precision(c.precision, [&](auto tag) {
    using S = decltype(tag);
    const auto model = load_checkpoint<S>(ckpt);
    auto rep = to_json(evaluate(model, data, c.train.truncate, {f.aux_block}));
    rep["checkpoint"] = ckpt.string();
    rep["split"] = f.split;
    rep["head"] = f.aux_block ? "aux" + std::to_string(f.aux_block) : "main";
    io::write_json(std::filesystem::path(c.paths.out_dir) / "metrics.json", rep);
    std::cout << rep.dump(2) << "\n";
    return static_cast<int>(kOk);
  });
}

inline int cmd_gradcheck(const Flags& f) {
  RunConfig c = resolve(f);
  ToySpec toy;
  if (f.seed) toy.seed = *f.seed;
  if (f.blocks) toy.blocks = *f.blocks;
  ModelConfig mc = toy.model_config();
  mc.mode = c.mode;
  mc.use_dilation = c.model.use_dilation;
  mc.use_fuser = c.model.use_fuser;
  mc.use_cons_loss = c.model.use_cons_loss;
  mc.use_aux_loss = c.model.use_aux_loss;
  mc.fuser_variant = c.model.fuser_variant;
  // Finite differences need the headroom of 64-bit arithmetic.
  const Model<double> model(mc);
  const auto prob = make_toy_problem<double>(mc, toy.batch, toy.t, toy.pad, toy.seed);
  const auto rep = gradcheck_model(model, prob, f.h, f.tol);
  std::cout << std::setprecision(3) << std::scientific << "max_rel_error=" << rep.max_rel_error
            << " max_abs_error=" << rep.max_abs_error << " worst=" << rep.worst_param << "[" << rep.worst_index << "]"
            << " coords=" << rep.coords_checked << " params=" << rep.params_checked << " tol=" << rep.tol << " "
            << (rep.passed ? "PASS" : "FAIL") << "\n";
  return rep.passed ? kOk : kNumeric;
}

inline int cmd_bench(const Flags& f) {
  RunConfig c = resolve(f);
  BenchSpec spec;
  spec.lengths = f.lengths;
  spec.runs = f.runs;
  if (f.seed) spec.seed = *f.seed;
  const auto rep = with_precision(c.precision, [&](auto tag) { return run_bench<decltype(tag)>(spec); });
  std::cout << "    T  eta   forward_s  fwd+bwd_s   frames/s\n";
  for (const auto& r : rep.rows) {
    std::printf("%5zu  %3zu  %10.5f  %9.5f  %9.0f\n", r.t, r.eta, r.forward_s, r.backward_s, r.frames_per_s);
  }
  auto ratios = [&](const std::string& label, const std::vector<double>& v) {
    std::cout << label;
    for (std::size_t i = 0; i < v.size(); ++i)
      std::printf("  %zu->%zu: %.3f", spec.lengths[i], spec.lengths[i + 1], v[i]);
    std::cout << "\n";
  };
  ratios("time(2T)/time(T) eta=1:", rep.standard_ratios);
  ratios("time(2T)/time(T) eta=" + std::to_string(spec.dilated_eta) + ":", rep.dilated_ratios);
  if (!f.out.empty()) io::write_json(std::filesystem::path(f.out) / "bench.json", to_json(rep));
  return kOk;
}

inline int dispatch(int argc, char** argv) {
  CLI::App app{"temba: dilated selective state-space models for dense temporal labeling"};
  app.require_subcommand(1);
  Flags f;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Train a model");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check on a toy model");
  auto* bench = app.add_subcommand("bench", "Time standard vs dilated scans as T doubles");
  for (auto* s : {synth, train, eval, grad, bench}) add_common(s, f);
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint to evaluate (default <out>/best.tmbw)");
  eval->add_option("--split", f.split, "train | val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--aux-block", f.aux_block, "Score auxiliary head k instead of the main head");
  grad->add_option("--step", f.h, "Finite-difference step")->check(CLI::PositiveNumber);
  grad->add_option("--tol", f.tol, "Relative error tolerance")->check(CLI::PositiveNumber);
  bench->add_option("--runs", f.runs, "Repetitions per length")->check(CLI::PositiveNumber);
  bench->add_option("--lengths", f.lengths, "Sequence lengths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }
  try {
    if (*synth) return cmd_synth(f);
    if (*train) return cmd_train(f);
    if (*eval) return cmd_eval(f);
    if (*grad) return cmd_gradcheck(f);
    return cmd_bench(f);
  } catch (const ContractViolation& e) {
    log::error(e.what());
    return kValidation;
  } catch (const NumericFault& e) {
    log::error(e.what());
    return kNumeric;
  } catch (const FormatError& e) {
    log::error(e.what());
    return kIo;
  } catch (const IoError& e) {
    log::error(e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    log::error(e.what());
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    log::error(std::string("bad JSON content: ") + e.what());
    return kIo;
  }
}

}  // namespace temba::cli
