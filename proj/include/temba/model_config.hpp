#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "temba/errors.hpp"

namespace temba {

enum class Mode { detection, summarization };
enum class Arch { temba, linear };
enum class FuserVariant { sum_proj, sum_proj_ssm, concat_proj, concat_proj_ssm };
enum class ConsPairs { all, adjacent };

inline std::string to_string(Mode m) { return m == Mode::detection ? "detection" : "summarization"; }
inline std::string to_string(Arch a) { return a == Arch::temba ? "temba" : "linear"; }
inline std::string to_string(ConsPairs p) { return p == ConsPairs::all ? "all" : "adjacent"; }
inline std::string to_string(FuserVariant v) {
  switch (v) {
    case FuserVariant::sum_proj: return "sum+proj";
    case FuserVariant::sum_proj_ssm: return "sum+proj+ssm";
    case FuserVariant::concat_proj: return "concat+proj";
    case FuserVariant::concat_proj_ssm: return "concat+proj+ssm";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "detection") return Mode::detection;
  if (s == "summarization") return Mode::summarization;
  throw ContractViolation("unknown mode '" + s + "' (detection|summarization)");
}
inline Arch parse_arch(const std::string& s) {
  if (s == "temba") return Arch::temba;
  if (s == "linear") return Arch::linear;
  throw ContractViolation("unknown arch '" + s + "' (temba|linear)");
}
inline ConsPairs parse_cons_pairs(const std::string& s) {
  if (s == "all") return ConsPairs::all;
  if (s == "adjacent") return ConsPairs::adjacent;
  throw ContractViolation("unknown consistency pairing '" + s + "' (all|adjacent)");
}
inline FuserVariant parse_fuser_variant(const std::string& s) {
  for (auto v : {FuserVariant::sum_proj, FuserVariant::sum_proj_ssm, FuserVariant::concat_proj,
                 FuserVariant::concat_proj_ssm})
    if (to_string(v) == s) return v;
  throw ContractViolation("unknown fuser variant '" + s +
                          "' (sum+proj|sum+proj+ssm|concat+proj|concat+proj+ssm)");
}

struct ModelConfig {
  Arch arch = Arch::temba;
  Mode mode = Mode::detection;
  std::size_t input_dim = 1024;  // raw feature width D
  std::size_t blocks = 3;        // K
  double gamma = 1.5;
  std::size_t d0 = 256;
  std::size_t state_dim = 16;    // n
  std::size_t fuser_dim = 0;     // E; 0 means D_K
  std::size_t num_classes = 51;  // C
  std::size_t t_pad = 2500;
  double alpha = 100.0;
  double beta = 1.0;
  bool use_dilation = true;
  bool use_fuser = true;
  FuserVariant fuser_variant = FuserVariant::sum_proj_ssm;
  bool use_cons_loss = true;
  bool use_aux_loss = true;
  ConsPairs cons_pairs = ConsPairs::all;
  std::uint64_t seed = 0;

  // D_0 .. D_K. Block 1 keeps D_0; later blocks expand by
  // D_k = round-half-up(gamma * D_{k-1}), giving 256, 256, 384, 576 by default.
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{d0};
    if (blocks >= 1) d.push_back(d0);
    for (std::size_t k = 2; k <= blocks; ++k)
      d.push_back(static_cast<std::size_t>(std::floor(gamma * static_cast<double>(d.back()) + 0.5)));
    return d;
  }
  // Block dimensions D_1 .. D_K.
  std::vector<std::size_t> block_dims() const {
    auto d = dims();
    return {d.begin() + 1, d.end()};
  }
  std::size_t eta(std::size_t k) const { return use_dilation ? k : 1; }
  std::size_t fuser_width() const {
    if (!use_fuser) return block_dims().back();
    return fuser_dim ? fuser_dim : block_dims().back();
  }
  // Output width of the main and auxiliary heads.
  std::size_t head_width() const { return mode == Mode::detection ? num_classes : 1; }

  void validate() const {
    require(input_dim >= 1, "model.input_dim must be >= 1");
    require(num_classes >= 1, "model.num_classes must be >= 1");
    require(t_pad >= 1, "model.t_pad must be >= 1");
    require(alpha >= 0.0 && beta >= 0.0, "model.alpha and model.beta must be >= 0");
    if (arch == Arch::temba) {
      require(blocks >= 1, "model.blocks must be >= 1");
      require(gamma > 0.0, "model.gamma must be positive");
      require(d0 >= 1 && state_dim >= 1, "model.d0 and model.state_dim must be >= 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"arch", to_string(c.arch)},
                     {"mode", to_string(c.mode)},
                     {"input_dim", c.input_dim},
                     {"blocks", c.blocks},
                     {"gamma", c.gamma},
                     {"d0", c.d0},
                     {"state_dim", c.state_dim},
                     {"fuser_dim", c.fuser_dim},
                     {"num_classes", c.num_classes},
                     {"t_pad", c.t_pad},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"use_dilation", c.use_dilation},
                     {"use_fuser", c.use_fuser},
                     {"fuser_variant", to_string(c.fuser_variant)},
                     {"use_cons_loss", c.use_cons_loss},
                     {"use_aux_loss", c.use_aux_loss},
                     {"cons_pairs", to_string(c.cons_pairs)},
                     {"seed", c.seed}};
}

// Overlays keys present in j onto c. Unknown keys are rejected.
inline void merge_json(const nlohmann::json& j, ModelConfig& c) {
  require(j.is_object(), "model config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "arch") c.arch = parse_arch(v.get<std::string>());
    else if (key == "mode") c.mode = parse_mode(v.get<std::string>());
    else if (key == "input_dim") c.input_dim = v.get<std::size_t>();
    else if (key == "blocks") c.blocks = v.get<std::size_t>();
    else if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "d0") c.d0 = v.get<std::size_t>();
    else if (key == "state_dim") c.state_dim = v.get<std::size_t>();
    else if (key == "fuser_dim") c.fuser_dim = v.get<std::size_t>();
    else if (key == "num_classes") c.num_classes = v.get<std::size_t>();
    else if (key == "t_pad") c.t_pad = v.get<std::size_t>();
    else if (key == "alpha") c.alpha = v.get<double>();
    else if (key == "beta") c.beta = v.get<double>();
    else if (key == "use_dilation") c.use_dilation = v.get<bool>();
    else if (key == "use_fuser") c.use_fuser = v.get<bool>();
    else if (key == "fuser_variant") c.fuser_variant = parse_fuser_variant(v.get<std::string>());
    else if (key == "use_cons_loss") c.use_cons_loss = v.get<bool>();
    else if (key == "use_aux_loss") c.use_aux_loss = v.get<bool>();
    else if (key == "cons_pairs") c.cons_pairs = parse_cons_pairs(v.get<std::string>());
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ContractViolation("unknown model config key '" + key + "'");
  }
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  merge_json(j, c);
}

}  // namespace temba
