#pragma once

// Per-frame average precision, duration-bucketed mAP and rank correlations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "temba/data.hpp"
#include "temba/errors.hpp"

namespace temba {

// Mean of precision@k over the ranks k of positives, ranking by score
// descending with ties kept in original order. Empty when no positive.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const char> positive) {
  require(scores.size() == positive.size(), "average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positive[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

struct ApReport {
  std::vector<std::optional<double>> per_class;  // empty entry: class had no positives
  double map = 0.0;
  std::size_t included = 0;

  std::vector<std::size_t> excluded_classes() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < per_class.size(); ++c)
      if (!per_class[c]) out.push_back(c);
    return out;
  }
};

// Frame-level AP per class over valid frames. probs and labels are N x C
// row-major, mask has N entries.
inline ApReport frame_map(std::span<const double> probs, std::span<const double> labels, std::span<const double> mask,
                          std::size_t num_classes) {
  require(num_classes >= 1, "frame_map: need at least one class");
  const std::size_t n = mask.size();
  require(probs.size() == n * num_classes && labels.size() == n * num_classes, "frame_map: shape mismatch");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) valid.push_back(i);
  if (valid.empty()) throw ContractViolation("frame_map: every frame is masked");
  ApReport rep;
  double total = 0.0;
  std::vector<double> s(valid.size());
  std::vector<char> y(valid.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < valid.size(); ++k) {
      s[k] = probs[valid[k] * num_classes + c];
      y[k] = labels[valid[k] * num_classes + c] > 0.5;
    }
    rep.per_class.push_back(average_precision(s, y));
    if (rep.per_class.back()) {
      total += *rep.per_class.back();
      ++rep.included;
    }
  }
  rep.map = rep.included ? total / static_cast<double>(rep.included) : 0.0;
  return rep;
}

enum class DurationBucket { short_, mid, long_ };

inline constexpr double kShortBelowSeconds = 10.0;
inline constexpr double kLongAboveSeconds = 20.0;

inline DurationBucket bucket_of(double seconds) {
  if (seconds < kShortBelowSeconds) return DurationBucket::short_;
  if (seconds > kLongAboveSeconds) return DurationBucket::long_;
  return DurationBucket::mid;
}

inline const char* to_string(DurationBucket b) {
  switch (b) {
    case DurationBucket::short_: return "short";
    case DurationBucket::mid: return "mid";
    case DurationBucket::long_: return "long";
  }
  return "?";
}

// Scores of one video's real frames (T x C) next to its annotation.
struct VideoScores {
  std::vector<double> probs;
  const AnnotationDoc* doc = nullptr;
};

struct BucketReport {
  std::optional<double> short_map, mid_map, long_map;  // empty: bucket absent
  std::vector<std::size_t> instances{0, 0, 0};         // segment counts per bucket

  std::optional<double>& at(DurationBucket b) {
    return b == DurationBucket::short_ ? short_map : b == DurationBucket::mid ? mid_map : long_map;
  }
  const std::optional<double>& at(DurationBucket b) const {
    return b == DurationBucket::short_ ? short_map : b == DurationBucket::mid ? mid_map : long_map;
  }
};

// AP per (class, bucket): positives are frames covered by a segment of that
// class whose duration falls in the bucket; negatives are frames where the
// class is absent; frames of the class in other buckets are left out. A
// bucket's mAP averages the classes that have positives in it.
inline BucketReport duration_bucket_map(const std::vector<VideoScores>& videos, std::size_t num_classes) {
  BucketReport rep;
  for (auto b : {DurationBucket::short_, DurationBucket::mid, DurationBucket::long_}) {
    double total = 0.0;
    std::size_t included = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::vector<double> s;
      std::vector<char> y;
      for (const auto& v : videos) {
        const auto& doc = *v.doc;
        const std::size_t t = doc.num_segments;
        require(v.probs.size() == t * num_classes, "duration_bucket_map: scores shape mismatch for " + doc.video_id);
        // 0 = absent, 1 = in bucket, 2 = other bucket only
        std::vector<char> state(t, 0);
        for (const auto& seg : doc.segments) {
          if (doc.class_index(seg.cls) != c) continue;
          const char mark = bucket_of(doc.seconds(seg)) == b ? 1 : 2;
          for (std::size_t i = seg.start; i <= seg.end; ++i)
            if (state[i] != 1) state[i] = mark;
        }
        for (std::size_t i = 0; i < t; ++i) {
          if (state[i] == 2) continue;
          s.push_back(v.probs[i * num_classes + c]);
          y.push_back(state[i] == 1);
        }
      }
      if (auto ap = average_precision(s, y)) {
        total += *ap;
        ++included;
      }
    }
    if (included) rep.at(b) = total / static_cast<double>(included);
  }
  for (const auto& v : videos)
    for (const auto& seg : v.doc->segments) ++rep.instances[static_cast<std::size_t>(bucket_of(v.doc->seconds(seg)))];
  return rep;
}

// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct RankCorrelation {
  std::optional<double> kendall_tau;  // tau-b
  std::optional<double> spearman_rho;
};

// Kendall tau-b and Spearman rho; empty when either input is constant.
inline RankCorrelation rank_correlations(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), "rank_correlations: size mismatch");
  require(pred.size() >= 2, "rank_correlations: need at least two frames");
  const std::size_t n = pred.size();
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = pred[i] - pred[j], dy = truth[i] - truth[j];
      if (dx == 0.0) ties_x += 1;
      if (dy == 0.0) ties_y += 1;
      if (dx == 0.0 || dy == 0.0) continue;
      ((dx > 0) == (dy > 0) ? concordant : discordant) += 1;
    }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  RankCorrelation out;
  const double denom = std::sqrt((pairs - ties_x) * (pairs - ties_y));
  if (denom > 0.0) out.kendall_tau = (concordant - discordant) / denom;

  const auto rx = average_ranks(pred), ry = average_ranks(truth);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx > 0.0 && syy > 0.0) out.spearman_rho = sxy / std::sqrt(sxx * syy);
  return out;
}

struct MetricReport {
  Mode mode = Mode::detection;
  ApReport ap;
  BucketReport buckets;
  // summarization: mean over videos with defined coefficients
  std::optional<double> kendall_tau, spearman_rho;
  std::size_t videos = 0;
};

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"mode", to_string(r.mode)}, {"videos", r.videos}};
  if (r.mode == Mode::detection) {
    auto per = nlohmann::json::array();
    for (const auto& ap : r.ap.per_class) per.push_back(opt_json(ap));
    j["per_class_ap"] = per;
    j["map"] = r.ap.map;
    j["excluded_classes"] = r.ap.excluded_classes();
    j["bucket_map"] = {{"short", opt_json(r.buckets.short_map)},
                       {"mid", opt_json(r.buckets.mid_map)},
                       {"long", opt_json(r.buckets.long_map)}};
    j["bucket_instances"] = {{"short", r.buckets.instances[0]},
                             {"mid", r.buckets.instances[1]},
                             {"long", r.buckets.instances[2]}};
  } else {
    j["kendall_tau"] = opt_json(r.kendall_tau);
    j["spearman_rho"] = opt_json(r.spearman_rho);
  }
  return j;
}

}  // namespace temba
