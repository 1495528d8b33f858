#include "lcodom/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lcodom {

using nlohmann::ordered_json;

LatencyStats latency_stats(std::vector<double> seconds) {
  if (seconds.empty()) throw std::invalid_argument("latency_stats: no samples");
  std::sort(seconds.begin(), seconds.end());
  const std::size_t n = seconds.size();
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return seconds[std::clamp<std::size_t>(r, 1, n) - 1];
  };
  double sum = 0;
  for (double s : seconds) sum += s;
  return {n, sum / static_cast<double>(n), rank(0.5), rank(0.95), seconds.back()};
}

SequenceEvaluation evaluate_sequence(const std::string& id, std::span<const RelativePose> pred,
                                     std::span<const RelativePose> gt_rel, std::span<const PoseMatrix> gt_poses,
                                     IntegrationMode mode, std::optional<LatencyStats> latency) {
  if (gt_poses.size() != gt_rel.size() + 1)
    throw std::invalid_argument("sequence " + id + ": " + std::to_string(gt_poses.size()) + " poses for " +
                                std::to_string(gt_rel.size()) + " pairs");
  SequenceEvaluation e;
  e.id = id;
  e.pairs = pred.size();
  e.abs = abs_errors(pred, gt_rel);
  const auto dist = path_distances(gt_poses);
  e.path_length_m = dist.empty() ? 0.0 : dist.back();
  // Both trajectories start at the first ground-truth pose so the 3D lift is comparable.
  const auto lifted = lift_to_3d(integrate(pred, mode));
  std::vector<PoseMatrix> anchored;
  anchored.reserve(lifted.size());
  for (const auto& p : lifted) anchored.push_back(gt_poses[0] * p);
  e.drift = drift_metrics(anchored, gt_poses);
  e.latency = latency;
  return e;
}

namespace {

ordered_json number_or_null(bool ok, double v) { return ok ? ordered_json(v) : ordered_json(nullptr); }

ordered_json drift_json(const DriftScores& d) {
  ordered_json j;
  j["status"] = d.sufficient ? "ok" : "insufficient length";
  j["segments"] = d.segments;
  j["t_rel_percent"] = number_or_null(d.sufficient, d.t_rel);
  j["r_rel_deg_per_100m"] = number_or_null(d.sufficient, d.r_rel);
  ordered_json per = ordered_json::array();
  for (const auto& l : d.per_length) {
    ordered_json e;
    e["length_m"] = l.length;
    e["segments"] = l.segments;
    e["t_rel_percent"] = number_or_null(l.segments > 0, l.t_rel);
    e["r_rel_deg_per_100m"] = number_or_null(l.segments > 0, l.r_rel);
    per.push_back(std::move(e));
  }
  j["per_length"] = std::move(per);
  return j;
}

ordered_json latency_json(const std::optional<LatencyStats>& l) {
  if (!l) return nullptr;
  ordered_json j;
  j["frames"] = l->frames;
  j["mean_s_per_frame"] = l->mean_s;
  j["median_s_per_frame"] = l->median_s;
  j["p95_s_per_frame"] = l->p95_s;
  j["max_s_per_frame"] = l->max_s;
  return j;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

ordered_json eval_report_json(const EvalReport& report) {
  ordered_json j;
  j["schema"] = "lcodom-eval/1";
  j["integration_mode"] = report.mode;
  j["source"] = report.source;
  ordered_json seqs = ordered_json::array();
  for (const auto& s : report.sequences) {
    ordered_json e;
    e["id"] = s.id;
    e["pairs"] = s.pairs;
    e["path_length_m"] = s.path_length_m;
    e["drift"] = drift_json(s.drift);
    e["abs"] = {{"sigma_r_deg", s.abs.sigma_r}, {"sigma_t_m", s.abs.sigma_t}};
    e["latency"] = latency_json(s.latency);
    seqs.push_back(std::move(e));
  }
  j["sequences"] = std::move(seqs);
  return j;
}

std::string eval_report_text(const EvalReport& report) {
  std::string out = "integration mode: " + report.mode + "\nsource: " + report.source + "\n\n";
  out += "seq   pairs   length_m   t_rel(%)  r_rel(deg/100m)  sigma_r(deg)  sigma_t(m)  latency(s/frame)\n";
  for (const auto& s : report.sequences) {
    char head[64];
    std::snprintf(head, sizeof head, "%-5s %6zu %10.1f ", s.id.c_str(), s.pairs, s.path_length_m);
    out += head;
    if (s.drift.sufficient)
      out += fmt("%10.3f", s.drift.t_rel) + fmt(" %16.3f", s.drift.r_rel);
    else
      out += "  insufficient length        ";
    out += fmt(" %13.4f", s.abs.sigma_r) + fmt(" %11.4f", s.abs.sigma_t);
    out += s.latency ? fmt(" %17.4f", s.latency->mean_s) : std::string("               n/a");
    out += "\n";
  }
  return out;
}

}  // namespace lcodom
