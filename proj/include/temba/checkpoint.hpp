#pragma once

// TMBW checkpoint container:
//   "TMBW" | u32 version | u32 len + UTF-8 JSON model config |
//   u32 count | count x (u32 len + name | u32 rank | rank x u32 dim | f32 values)
// All integers and floats little-endian; parameters in sorted name order.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include "temba/data.hpp"
#include "temba/model.hpp"

namespace temba {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
std::string encode_checkpoint(const Model<S>& model) {
  std::string out = "TMBW";
  io::put_u32(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(model.config()).dump();
  io::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto params = model.named_parameters();
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t a = 0; a < t.rank(); ++a) io::put_u32(out, static_cast<std::uint32_t>(t.shape()[a]));
    for (S v : t.values()) io::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline ModelConfig checkpoint_config(const std::string& bytes, const std::string& what = "checkpoint") {
  io::Reader r(bytes, what);
  r.magic("TMBW");
  const std::size_t vat = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version), vat);
  const std::size_t len = r.u32("config length");
  const std::size_t at = r.offset();
  const std::string text = r.bytes(len, "config");
  try {
    return nlohmann::json::parse(text).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad config JSON: " + e.what(), at);
  }
}

// Rebuilds the model from the embedded config and overwrites every parameter.
template <typename S>
Model<S> decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  Model<S> model(checkpoint_config(bytes, what));
  io::Reader r(bytes, what);
  r.bytes(8, "header");
  r.bytes(r.u32("config length"), "config");
  const auto params = model.named_parameters();
  const std::size_t count = r.u32("parameter count");
  if (count != params.size())
    throw FormatError(what + ": " + std::to_string(count) + " parameters stored, model expects " +
                          std::to_string(params.size()),
                      r.offset() - 4);
  for (const auto& [name, t] : params) {
    const std::size_t at = r.offset();
    const std::string stored = r.bytes(r.u32("name length"), "name");
    if (stored != name) throw FormatError(what + ": expected parameter '" + name + "', found '" + stored + "'", at);
    const std::size_t rank = r.u32("rank");
    if (rank != t.rank()) throw FormatError(what + ": rank mismatch for '" + name + "'", r.offset() - 4);
    for (std::size_t a = 0; a < rank; ++a)
      if (r.u32("dim") != t.shape()[a])
        throw FormatError(what + ": shape mismatch for '" + name + "'", r.offset() - 4);
    r.need(4 * t.numel(), "values of '" + name + "'");
    auto vals = t.mutable_values();
    for (auto& v : vals) v = static_cast<S>(r.f32("value"));
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after last parameter", r.offset());
  return model;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model) {
  io::write_file(path, encode_checkpoint(model));
}

template <typename S>
Model<S> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<S>(io::read_file(path), path.string());
}

// Copies parameter values from src into dst (same architecture).
template <typename S>
void copy_parameters(const Model<S>& src, const Model<S>& dst) {
  const auto a = src.named_parameters();
  const auto b = dst.named_parameters();
  require(a.size() == b.size(), "copy_parameters: architectures differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].first == b[i].first && a[i].second.shape() == b[i].second.shape(),
            "copy_parameters: parameter mismatch at '" + a[i].first + "'");
    std::copy(a[i].second.values().begin(), a[i].second.values().end(), b[i].second.mutable_values().begin());
  }
}

}  // namespace temba
