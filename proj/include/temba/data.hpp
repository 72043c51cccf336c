#pragma once

// On-disk formats (TMBF feature files, JSON annotations, split manifest), the
// synthetic dense-overlap generator and fixed-length batch padding.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "temba/errors.hpp"
#include "temba/model_config.hpp"
#include "temba/random.hpp"
#include "temba/tensor.hpp"

namespace temba {

namespace fs = std::filesystem;

// ------------------------------------------------------------ byte helpers

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

// Bounds-checked little-endian reader over an in-memory file image.
class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& field) const {
    if (remaining() < n)
      throw FormatError(what_ + ": truncated reading " + field + ", expected " + std::to_string(n) +
                            " more bytes but only " + std::to_string(remaining()) + " remain",
                        pos_);
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }
  std::string bytes(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void magic(const char (&expect)[5]) {
    const std::size_t at = pos_;
    const std::string m = bytes(4, "magic");
    if (m != std::string(expect, 4))
      throw FormatError(what_ + ": bad magic, expected '" + std::string(expect, 4) + "'", at);
  }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what(), e.byte);
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace io

// ------------------------------------------------------------ feature files

// Per-video segment features, time-major T x D.
struct FeatureMatrix {
  std::size_t t = 0;
  std::size_t d = 0;
  std::vector<float> values;

  float at(std::size_t time, std::size_t ch) const { return values[time * d + ch]; }
};

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

inline std::string encode_features(const FeatureMatrix& f) {
  require(f.t >= 1 && f.d >= 1, "features: T and D must be >= 1");
  require(f.values.size() == f.t * f.d, "features: payload size does not match T*D");
  std::string out = "TMBF";
  out.reserve(kFeatureHeaderBytes + 4 * f.values.size());
  io::put_u32(out, kFeatureVersion);
  io::put_u32(out, static_cast<std::uint32_t>(f.t));
  io::put_u32(out, static_cast<std::uint32_t>(f.d));
  for (float v : f.values) io::put_f32(out, v);
  return out;
}

inline FeatureMatrix decode_features(const std::string& bytes, const std::string& what = "feature file") {
  io::Reader r(bytes, what);
  r.magic("TMBF");
  const std::size_t vat = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version), vat);
  FeatureMatrix f;
  f.t = r.u32("T");
  f.d = r.u32("D");
  if (f.t == 0 || f.d == 0) throw FormatError(what + ": T and D must be >= 1", 8);
  const std::size_t expected = 4 * f.t * f.d;
  if (r.remaining() != expected)
    throw FormatError(what + ": payload length mismatch, expected " + std::to_string(expected) +
                          " bytes for T=" + std::to_string(f.t) + " D=" + std::to_string(f.d) + ", got " +
                          std::to_string(r.remaining()),
                      r.offset() + std::min(expected, r.remaining()));
  f.values.resize(f.t * f.d);
  for (auto& v : f.values) v = r.f32("payload");
  return f;
}

inline void write_features(const fs::path& path, const FeatureMatrix& f) { io::write_file(path, encode_features(f)); }
inline FeatureMatrix read_features(const fs::path& path) { return decode_features(io::read_file(path), path.string()); }

// ---------------------------------------------------------------- annotations

struct Segment {
  std::string cls;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  std::size_t length() const { return end - start + 1; }
};

struct AnnotationDoc {
  std::string video_id;
  std::size_t num_segments = 0;
  double fps_segments = 1.0;
  std::vector<std::string> classes;
  std::vector<Segment> segments;
  std::vector<double> importance;  // summarization mode only

  bool has_importance() const { return !importance.empty(); }

  std::size_t class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return i;
    throw ContractViolation("annotation " + video_id + ": unknown class '" + name + "'");
  }

  // Duration of a segment in seconds.
  double seconds(const Segment& s) const { return static_cast<double>(s.length()) / fps_segments; }

  void validate() const {
    require(num_segments >= 1, "annotation " + video_id + ": num_segments must be >= 1");
    require(fps_segments > 0.0, "annotation " + video_id + ": fps_segments must be positive");
    for (const auto& s : segments) {
      class_index(s.cls);
      if (s.start > s.end || s.end >= num_segments)
        throw ContractViolation("annotation " + video_id + ": segment [" + std::to_string(s.start) + "," +
                                std::to_string(s.end) + "] out of range for " + std::to_string(num_segments) +
                                " segments");
    }
    if (has_importance())
      require(importance.size() == num_segments,
              "annotation " + video_id + ": importance length differs from num_segments");
  }
};

inline void to_json(nlohmann::json& j, const AnnotationDoc& a) {
  j = nlohmann::json{{"video_id", a.video_id}, {"num_segments", a.num_segments}, {"fps_segments", a.fps_segments}};
  if (!a.classes.empty() || !a.has_importance()) {
    j["classes"] = a.classes;
    auto segs = nlohmann::json::array();
    for (const auto& s : a.segments) segs.push_back({{"class", s.cls}, {"start", s.start}, {"end", s.end}});
    j["segments"] = segs;
  }
  if (a.has_importance()) j["importance"] = a.importance;
}

inline void from_json(const nlohmann::json& j, AnnotationDoc& a) {
  try {
    a = AnnotationDoc{};
    a.video_id = j.at("video_id").get<std::string>();
    a.num_segments = j.at("num_segments").get<std::size_t>();
    a.fps_segments = j.value("fps_segments", 1.0);
    if (j.contains("classes")) a.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("segments"))
      for (const auto& s : j.at("segments")) {
        const auto start = s.at("start").get<long long>();
        const auto end = s.at("end").get<long long>();
        if (start < 0 || end < 0) throw ContractViolation("annotation: negative segment bound");
        a.segments.push_back({s.at("class").get<std::string>(), static_cast<std::size_t>(start),
                              static_cast<std::size_t>(end)});
      }
    if (j.contains("importance")) a.importance = j.at("importance").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("annotation: ") + e.what());
  }
}

// Min-max scaling to [0, 1]; a constant curve maps to all zeros.
inline std::vector<double> normalize_importance(const std::vector<double>& v) {
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi - *lo <= 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

inline AnnotationDoc read_annotation(const fs::path& path) {
  AnnotationDoc a = io::read_json(path).get<AnnotationDoc>();
  a.validate();
  if (a.has_importance()) a.importance = normalize_importance(a.importance);
  return a;
}

inline void write_annotation(const fs::path& path, const AnnotationDoc& a) {
  a.validate();
  io::write_json(path, nlohmann::json(a));
}

struct FrameLabels {
  std::size_t t_pad = 0;
  std::size_t num_classes = 0;
  std::vector<float> labels;  // t_pad x C multi-hot
  std::vector<float> mask;    // t_pad, 1 for real frames
};

// Multi-hot per-frame labels; frames >= num_segments are masked invalid.
inline FrameLabels labels_from_annotations(const AnnotationDoc& doc, std::size_t t_pad) {
  doc.validate();
  FrameLabels out;
  out.t_pad = t_pad;
  out.num_classes = doc.classes.size();
  out.labels.assign(t_pad * out.num_classes, 0.0f);
  out.mask.assign(t_pad, 0.0f);
  for (std::size_t t = 0; t < std::min(t_pad, doc.num_segments); ++t) out.mask[t] = 1.0f;
  for (const auto& s : doc.segments) {
    const std::size_t c = doc.class_index(s.cls);
    for (std::size_t t = s.start; t <= s.end && t < t_pad; ++t) out.labels[t * out.num_classes + c] = 1.0f;
  }
  return out;
}

// ----------------------------------------------------------------- manifest

struct Manifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

inline void to_json(nlohmann::json& j, const Manifest& m) { j = nlohmann::json{{"train", m.train}, {"val", m.val}}; }
inline void from_json(const nlohmann::json& j, Manifest& m) {
  try {
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

// ----------------------------------------------------------------- datasets

struct LabeledSequence {
  std::string id;
  FeatureMatrix features;
  AnnotationDoc doc;
};

struct DatasetPaths {
  fs::path features_dir;
  fs::path annotations_dir;
};

inline LabeledSequence load_sequence(const DatasetPaths& paths, const std::string& id) {
  LabeledSequence s;
  s.id = id;
  s.features = read_features(paths.features_dir / (id + ".tmbf"));
  s.doc = read_annotation(paths.annotations_dir / (id + ".json"));
  if (s.doc.num_segments != s.features.t)
    throw FormatError("video " + id + ": annotation has " + std::to_string(s.doc.num_segments) +
                      " segments but features have T=" + std::to_string(s.features.t));
  return s;
}

inline std::vector<LabeledSequence> load_split(const DatasetPaths& paths, const std::vector<std::string>& ids) {
  std::vector<LabeledSequence> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_sequence(paths, id));
  return out;
}

template <typename S>
struct Batch {
  Tensor<S> features;  // (B, T_pad, D)
  Tensor<S> targets;   // (B, T_pad, C) multi-hot or (B, T_pad, 1) importance
  Tensor<S> mask;      // (B, T_pad)
  std::vector<std::size_t> lengths;
};

// Zero-pads features and targets to t_pad. Longer sequences are an error
// unless `truncate`, which keeps the first t_pad frames.
template <typename S>
Batch<S> pad_batch(const std::vector<const LabeledSequence*>& seqs, std::size_t t_pad, Mode mode,
                   bool truncate = false) {
  require(!seqs.empty(), "pad_batch: empty batch");
  const std::size_t nb = seqs.size(), d = seqs[0]->features.d;
  const std::size_t c = mode == Mode::detection ? seqs[0]->doc.classes.size() : 1;
  std::vector<S> feat(nb * t_pad * d, S(0)), tgt(nb * t_pad * c, S(0)), mask(nb * t_pad, S(0));
  Batch<S> batch;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& s = *seqs[b];
    require(s.features.d == d, "pad_batch: feature width differs within batch (" + s.id + ")");
    if (s.features.t > t_pad && !truncate)
      throw ContractViolation("pad_batch: video " + s.id + " has T=" + std::to_string(s.features.t) +
                              " > T_pad=" + std::to_string(t_pad) + "; pass --truncate to keep the first T_pad frames");
    const std::size_t len = std::min(s.features.t, t_pad);
    batch.lengths.push_back(len);
    for (std::size_t t = 0; t < len; ++t) {
      mask[b * t_pad + t] = S(1);
      for (std::size_t j = 0; j < d; ++j) feat[(b * t_pad + t) * d + j] = static_cast<S>(s.features.at(t, j));
    }
    if (mode == Mode::detection) {
      require(s.doc.classes.size() == c, "pad_batch: class count differs within batch (" + s.id + ")");
      const auto fl = labels_from_annotations(s.doc, t_pad);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < c; ++j) tgt[(b * t_pad + t) * c + j] = static_cast<S>(fl.labels[t * c + j]);
    } else {
      require(s.doc.has_importance(), "pad_batch: video " + s.id + " has no importance annotation");
      for (std::size_t t = 0; t < len; ++t) tgt[b * t_pad + t] = static_cast<S>(s.doc.importance[t]);
    }
  }
  batch.features = Tensor<S>::from({nb, t_pad, d}, std::move(feat));
  batch.targets = Tensor<S>::from({nb, t_pad, c}, std::move(tgt));
  batch.mask = Tensor<S>::from({nb, t_pad}, std::move(mask));
  return batch;
}

// ------------------------------------------------------- synthetic datasets

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t num_videos = 250;
  std::size_t num_val = 50;
  std::size_t t_min = 384;
  std::size_t t_max = 512;
  std::size_t num_classes = 10;
  std::size_t feature_dim = 32;
  double fps_segments = 1.0;
  // Classes [0, round(short_fraction * C)) use the short law, the rest the long law.
  double short_fraction = 0.5;
  double short_min_s = 2.0, short_max_s = 10.0;
  double long_min_s = 20.0, long_max_s = 120.0;
  // Mean number of concurrently active actions; 0 forbids any overlap.
  double overlap = 1.5;
  double noise = 8.0;
  std::size_t smooth_window = 3;
  double prototype_scale = 1.0;
  Mode mode = Mode::detection;

  std::size_t short_classes() const {
    return static_cast<std::size_t>(std::floor(short_fraction * static_cast<double>(num_classes) + 0.5));
  }
  bool is_short(std::size_t c) const { return c < short_classes(); }
  double mean_short_s() const { return 0.5 * (short_min_s + short_max_s); }
  double mean_long_s() const { return 0.5 * (long_min_s + long_max_s); }

  void validate() const {
    require(num_videos >= 1 && num_val <= num_videos, "synth: need 1 <= num_videos and num_val <= num_videos");
    require(t_min >= 1 && t_min <= t_max, "synth: need 1 <= t_min <= t_max");
    require(num_classes >= 1 && feature_dim >= 1, "synth: num_classes and feature_dim must be >= 1");
    require(fps_segments > 0.0, "synth: fps_segments must be positive");
    require(short_fraction >= 0.0 && short_fraction <= 1.0, "synth: short_fraction must be in [0,1]");
    require(0.0 < short_min_s && short_min_s <= short_max_s, "synth: bad short duration range");
    require(0.0 < long_min_s && long_min_s <= long_max_s, "synth: bad long duration range");
    require(overlap >= 0.0 && noise >= 0.0, "synth: overlap and noise must be >= 0");
    require(smooth_window >= 1, "synth: smooth_window must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"num_videos", s.num_videos},
                     {"num_val", s.num_val},
                     {"t_min", s.t_min},
                     {"t_max", s.t_max},
                     {"num_classes", s.num_classes},
                     {"feature_dim", s.feature_dim},
                     {"fps_segments", s.fps_segments},
                     {"short_fraction", s.short_fraction},
                     {"short_min_s", s.short_min_s},
                     {"short_max_s", s.short_max_s},
                     {"long_min_s", s.long_min_s},
                     {"long_max_s", s.long_max_s},
                     {"overlap", s.overlap},
                     {"noise", s.noise},
                     {"smooth_window", s.smooth_window},
                     {"prototype_scale", s.prototype_scale},
                     {"mode", to_string(s.mode)}};
}

inline void merge_json(const nlohmann::json& j, SynthSpec& s) {
  require(j.is_object(), "synth config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") s.seed = v.get<std::uint64_t>();
    else if (key == "num_videos") s.num_videos = v.get<std::size_t>();
    else if (key == "num_val") s.num_val = v.get<std::size_t>();
    else if (key == "t_min") s.t_min = v.get<std::size_t>();
    else if (key == "t_max") s.t_max = v.get<std::size_t>();
    else if (key == "num_classes") s.num_classes = v.get<std::size_t>();
    else if (key == "feature_dim") s.feature_dim = v.get<std::size_t>();
    else if (key == "fps_segments") s.fps_segments = v.get<double>();
    else if (key == "short_fraction") s.short_fraction = v.get<double>();
    else if (key == "short_min_s") s.short_min_s = v.get<double>();
    else if (key == "short_max_s") s.short_max_s = v.get<double>();
    else if (key == "long_min_s") s.long_min_s = v.get<double>();
    else if (key == "long_max_s") s.long_max_s = v.get<double>();
    else if (key == "overlap") s.overlap = v.get<double>();
    else if (key == "noise") s.noise = v.get<double>();
    else if (key == "smooth_window") s.smooth_window = v.get<std::size_t>();
    else if (key == "prototype_scale") s.prototype_scale = v.get<double>();
    else if (key == "mode") s.mode = parse_mode(v.get<std::string>());
    else throw ContractViolation("unknown synth config key '" + key + "'");
  }
}

inline std::string video_id(std::size_t i) {
  std::ostringstream os;
  os << "vid_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

namespace detail {

// Segment lengths in frames for one class: uniform seconds, rounded.
inline std::size_t draw_length(const SynthSpec& spec, std::size_t cls, Rng& rng) {
  const double sec = spec.is_short(cls) ? rng.uniform(spec.short_min_s, spec.short_max_s)
                                        : rng.uniform(spec.long_min_s, spec.long_max_s);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(sec * spec.fps_segments)));
}

// Places segments by rejection: the duration is drawn first and kept, only
// the start is re-drawn, so accepted lengths follow the duration law.
inline std::vector<Segment> place_segments(const SynthSpec& spec, std::size_t t, Rng& rng,
                                           const std::vector<std::string>& names) {
  const std::size_t c = spec.num_classes;
  std::vector<Segment> segs;
  std::vector<std::vector<char>> busy(spec.overlap > 0.0 ? c : 1, std::vector<char>(t, 0));
  const double occupancy = spec.overlap > 0.0 ? std::min(0.8, spec.overlap / static_cast<double>(c))
                                              : 0.5 / static_cast<double>(c);
  for (std::size_t cls = 0; cls < c; ++cls) {
    const double mean_len =
        (spec.is_short(cls) ? spec.mean_short_s() : spec.mean_long_s()) * spec.fps_segments;
    const double expected = occupancy * static_cast<double>(t) / mean_len;
    const std::size_t count = std::poisson_distribution<std::size_t>(expected)(rng.engine());
    auto& track = busy[spec.overlap > 0.0 ? cls : 0];
    for (std::size_t n = 0; n < count; ++n) {
      const std::size_t len = draw_length(spec, cls, rng);
      if (len > t) continue;
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto start = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t - len)));
        // one free frame on each side keeps same-track segments distinct
        const std::size_t lo = start > 0 ? start - 1 : 0, hi = std::min(t - 1, start + len);
        bool free = true;
        for (std::size_t i = lo; i <= hi && free; ++i) free = !track[i];
        if (!free) continue;
        std::fill(track.begin() + static_cast<std::ptrdiff_t>(start),
                  track.begin() + static_cast<std::ptrdiff_t>(start + len), 1);
        segs.push_back({names[cls], start, start + len - 1});
        break;
      }
    }
  }
  std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
    return a.start != b.start ? a.start < b.start : a.cls < b.cls;
  });
  return segs;
}

}  // namespace detail

struct SynthVideo {
  FeatureMatrix features;
  AnnotationDoc doc;
};

// Generates video `index` of the dataset described by spec; a pure function
// of (spec, index).
inline SynthVideo synth_video(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  const std::size_t c = spec.num_classes, d = spec.feature_dim;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < c; ++k) names.push_back("class_" + std::to_string(k));

  Rng proto_rng(spec.seed * 0x9E3779B97F4A7C15ull + 1);
  std::vector<double> protos(c * d), weights(c);
  for (auto& v : protos) v = proto_rng.normal(0.0, spec.prototype_scale);
  for (auto& w : weights) w = proto_rng.uniform(0.1, 1.0);

  Rng rng(spec.seed * 0x9E3779B97F4A7C15ull + 0x1000 + index);
  const auto t = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(spec.t_min),
                                                      static_cast<std::int64_t>(spec.t_max)));
  SynthVideo v;
  v.doc.video_id = video_id(index);
  v.doc.num_segments = t;
  v.doc.fps_segments = spec.fps_segments;
  v.doc.classes = names;
  v.doc.segments = detail::place_segments(spec, t, rng, names);

  std::vector<double> raw(t * d, 0.0), score(t, 0.0);
  for (const auto& s : v.doc.segments) {
    const std::size_t cls = v.doc.class_index(s.cls);
    for (std::size_t i = s.start; i <= s.end; ++i) {
      score[i] += weights[cls];
      for (std::size_t j = 0; j < d; ++j) raw[i * d + j] += protos[cls * d + j];
    }
  }
  for (auto& x : raw) x += rng.normal(0.0, spec.noise);

  // centered moving average over time
  const std::size_t w = spec.smooth_window;
  v.features.t = t;
  v.features.d = d;
  v.features.values.resize(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t lo = i >= (w - 1) / 2 ? i - (w - 1) / 2 : 0;
    const std::size_t hi = std::min(t - 1, lo + w - 1);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) acc += raw[k * d + j];
      v.features.values[i * d + j] = static_cast<float>(acc / static_cast<double>(hi - lo + 1));
    }
  }
  if (spec.mode == Mode::summarization) v.doc.importance = normalize_importance(score);
  return v;
}

// Writes features/<id>.tmbf, annotations/<id>.json, manifest.json and
// synth_spec.json under out_dir. The last num_val videos form the val split.
inline Manifest synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  Manifest m;
  for (std::size_t i = 0; i < spec.num_videos; ++i) {
    const SynthVideo v = synth_video(spec, i);
    write_features(out_dir / "features" / (v.doc.video_id + ".tmbf"), v.features);
    write_annotation(out_dir / "annotations" / (v.doc.video_id + ".json"), v.doc);
    (i + spec.num_val < spec.num_videos ? m.train : m.val).push_back(v.doc.video_id);
  }
  io::write_json(out_dir / "manifest.json", nlohmann::json(m));
  io::write_json(out_dir / "synth_spec.json", nlohmann::json(spec));
  return m;
}

}  // namespace temba
