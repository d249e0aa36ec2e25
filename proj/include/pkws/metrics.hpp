// Copyright 2026 The pkws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pkws/common.hpp"

namespace pkws {

/// Labeled score collections. Positives should score high, negatives low.
struct ScoreSet {
  std::vector<double> positives;
  std::vector<double> negatives;

  void check() const {
    if (positives.empty() || negatives.empty())
      throw_data("ScoreSet: both positive and negative scores are required");
    for (double v : positives)
      if (!std::isfinite(v)) throw_numeric("ScoreSet: non-finite positive score");
    for (double v : negatives)
      if (!std::isfinite(v)) throw_numeric("ScoreSet: non-finite negative score");
  }
};

/// Acceptance rule: strictly greater than the threshold.
inline bool decide(double score, double threshold) { return score > threshold; }

struct CurvePoint {
  double threshold;
  double far;  // fraction of negatives accepted (score > threshold)
  double frr;  // fraction of positives rejected (score <= threshold)
};

/// One point per candidate threshold, ascending. Candidates are a -inf
/// sentinel plus every distinct observed score; FAR and FRR are step
/// functions that only change at observed scores, so this sweep is
/// exhaustive. FAR is non-increasing and FRR non-decreasing along the curve.
inline std::vector<CurvePoint> far_frr_curve(const ScoreSet& s) {
  s.check();
  std::vector<double> pos = s.positives, neg = s.negatives;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> candidates;
  candidates.reserve(pos.size() + neg.size() + 1);
  candidates.push_back(-std::numeric_limits<double>::infinity());
  candidates.insert(candidates.end(), pos.begin(), pos.end());
  candidates.insert(candidates.end(), neg.begin(), neg.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  std::vector<CurvePoint> curve;
  curve.reserve(candidates.size());
  for (double t : candidates) {
    const auto rejected_pos =
        std::upper_bound(pos.begin(), pos.end(), t) - pos.begin();
    const auto accepted_neg =
        neg.end() - std::upper_bound(neg.begin(), neg.end(), t);
    curve.push_back({t, static_cast<double>(accepted_neg) / nn,
                     static_cast<double>(rejected_pos) / np});
  }
  return curve;
}

struct EerResult {
  double eer;
  double threshold;
};

/// Equal error rate: (FAR + FRR) / 2 at the threshold minimizing |FAR - FRR|,
/// ties broken toward the smaller threshold.
inline EerResult eer(const ScoreSet& s) {
  const auto curve = far_frr_curve(s);
  size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < curve.size(); ++i) {
    const double gap = std::fabs(curve[i].far - curve[i].frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return {(curve[best].far + curve[best].frr) / 2.0, curve[best].threshold};
}

struct RateAtRate {
  double rate;       // the reported error rate
  double threshold;  // the operating threshold that achieves it
};

/// FRR at the smallest threshold whose FAR does not exceed `max_far`.
/// Always feasible: the curve ends where everything is rejected (FAR 0).
inline RateAtRate frr_at_far(const ScoreSet& s, double max_far) {
  if (!(max_far > 0.0)) throw_config("frr_at_far: target FAR must be positive");
  const auto curve = far_frr_curve(s);
  for (const auto& p : curve) {
    if (p.far <= max_far) return {p.frr, p.threshold};
  }
  const auto& last = curve.back();
  return {last.frr, last.threshold};
}

/// FAR at the largest threshold whose FRR does not exceed `max_frr`.
/// Always feasible: the -inf sentinel rejects nothing (FRR 0).
inline RateAtRate far_at_frr(const ScoreSet& s, double max_frr) {
  if (!(max_frr >= 0.0)) throw_config("far_at_frr: target FRR must be >= 0");
  const auto curve = far_frr_curve(s);
  for (size_t i = curve.size(); i-- > 0;) {
    if (curve[i].frr <= max_frr) return {curve[i].far, curve[i].threshold};
  }
  return {curve.front().far, curve.front().threshold};
}

/// FAR of a bare negative collection at a fixed, externally chosen threshold.
inline double far_at_threshold(const std::vector<double>& negatives,
                               double threshold) {
  if (negatives.empty()) throw_data("far_at_threshold: no negative scores");
  int64_t accepted = 0;
  for (double v : negatives)
    if (decide(v, threshold)) ++accepted;
  return static_cast<double>(accepted) / static_cast<double>(negatives.size());
}

}  // namespace pkws
