#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcodom/odometry.hpp"

namespace lcodom {

struct LatencyStats {
  std::size_t frames = 0;
  double mean_s = 0;
  double median_s = 0;
  double p95_s = 0;
  double max_s = 0;
};

/// Nearest-rank percentiles; throws on an empty sample.
LatencyStats latency_stats(std::vector<double> seconds);

struct SequenceEvaluation {
  std::string id;
  std::size_t pairs = 0;
  double path_length_m = 0;
  DriftScores drift;
  AbsErrors abs;
  std::optional<LatencyStats> latency;  // present when predictions were computed in this run
};

struct EvalReport {
  std::string mode;    // integration mode name
  std::string source;  // "checkpoint" or "predictions"
  std::vector<SequenceEvaluation> sequences;
};

SequenceEvaluation evaluate_sequence(const std::string& id, std::span<const RelativePose> pred,
                                     std::span<const RelativePose> gt_rel, std::span<const PoseMatrix> gt_poses,
                                     IntegrationMode mode, std::optional<LatencyStats> latency = std::nullopt);

/// Stable machine-readable layout ("schema": "lcodom-eval/1"). Metrics that
/// cannot be computed are null with a status string, never 0.
nlohmann::ordered_json eval_report_json(const EvalReport& report);
/// Fixed-width table of the same numbers.
std::string eval_report_text(const EvalReport& report);

}  // namespace lcodom
