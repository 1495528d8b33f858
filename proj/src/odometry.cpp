#include "lcodom/odometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lcodom {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = 0.5 * (r.trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

std::string_view integration_mode_name(IntegrationMode mode) {
  return mode == IntegrationMode::kPaperVerbatim ? "paper-verbatim" : "heading-integrated";
}

IntegrationMode parse_integration_mode(std::string_view name) {
  if (name == "heading-integrated") return IntegrationMode::kHeadingIntegrated;
  if (name == "paper-verbatim") return IntegrationMode::kPaperVerbatim;
  throw std::invalid_argument("unknown integration mode '" + std::string(name) + "'");
}

Trajectory2D integrate(std::span<const RelativePose> rel, IntegrationMode mode, Pose2D start) {
  Trajectory2D out;
  out.reserve(rel.size() + 1);
  out.push_back(start);
  Pose2D p = start;
  for (const auto& r : rel) {
    const double heading = p.theta + r.delta_theta;
    const double dir = (mode == IntegrationMode::kHeadingIntegrated ? heading : r.delta_theta) / kDegPerRad;
    p.x += r.delta_d * std::sin(dir);
    p.y += r.delta_d * std::cos(dir);
    p.theta = wrap_degrees(heading);
    out.push_back(p);
  }
  return out;
}

std::vector<PoseMatrix> lift_to_3d(const Trajectory2D& traj) {
  std::vector<PoseMatrix> out;
  out.reserve(traj.size());
  for (const auto& p : traj) out.push_back(PoseMatrix::planar(p.x, p.y, p.theta));
  return out;
}

Pose2D project_to_2d(const PoseMatrix& pose) {
  return {pose.translation.x(), pose.translation.z(), yaw_degrees(pose.rotation)};
}

std::vector<double> path_distances(std::span<const PoseMatrix> poses) {
  std::vector<double> dist(poses.size(), 0.0);
  for (std::size_t i = 1; i < poses.size(); ++i)
    dist[i] = dist[i - 1] + (poses[i].translation - poses[i - 1].translation).norm();
  return dist;
}

DriftScores drift_metrics(std::span<const PoseMatrix> pred, std::span<const PoseMatrix> gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("drift_metrics: " + std::to_string(pred.size()) + " predicted poses vs " +
                                std::to_string(gt.size()) + " ground-truth poses");
  constexpr std::size_t kLengths = std::size(kDriftLengths);
  const auto dist = path_distances(gt);
  DriftScores scores;
  scores.per_length.resize(kLengths);
  for (std::size_t l = 0; l < kLengths; ++l) scores.per_length[l].length = kDriftLengths[l];
  if (dist.empty() || dist.back() < kDriftLengths[0]) return scores;
  scores.sufficient = true;

  // Per start frame, per length: (t_err, r_err) or nothing; summed afterwards in a fixed order.
  const std::size_t starts = (gt.size() + kDriftStartStep - 1) / kDriftStartStep;
  struct Cell {
    bool valid = false;
    double t = 0, r = 0;
  };
  std::vector<Cell> cells(starts * kLengths);
#pragma omp parallel for schedule(dynamic, 4) if (starts > 64)
  for (std::size_t s = 0; s < starts; ++s) {
    const std::size_t first = s * kDriftStartStep;
    std::size_t last = first;
    for (std::size_t l = 0; l < kLengths; ++l) {
      const double len = kDriftLengths[l];
      while (last < gt.size() && !(dist[last] > dist[first] + len)) ++last;
      if (last >= gt.size()) break;
      const PoseMatrix gt_delta = gt[first].inverse() * gt[last];
      const PoseMatrix pred_delta = pred[first].inverse() * pred[last];
      const PoseMatrix err = gt_delta.inverse() * pred_delta;
      cells[s * kLengths + l] = {true, err.translation.norm() / len, rotation_angle(err.rotation) / len};
    }
  }

  double t_sum = 0, r_sum = 0;
  for (std::size_t l = 0; l < kLengths; ++l) {
    auto& pl = scores.per_length[l];
    double t = 0, r = 0;
    for (std::size_t s = 0; s < starts; ++s) {
      const Cell& c = cells[s * kLengths + l];
      if (!c.valid) continue;
      ++pl.segments;
      t += c.t;
      r += c.r;
    }
    if (pl.segments) {
      pl.t_rel = 100.0 * t / static_cast<double>(pl.segments);
      pl.r_rel = 100.0 * kDegPerRad * r / static_cast<double>(pl.segments);
    }
  }
  // Overall averages run over segments in start-frame order, like the benchmark tool.
  for (std::size_t s = 0; s < starts; ++s)
    for (std::size_t l = 0; l < kLengths; ++l) {
      const Cell& c = cells[s * kLengths + l];
      if (!c.valid) continue;
      ++scores.segments;
      t_sum += c.t;
      r_sum += c.r;
    }
  if (scores.segments == 0) {
    // Long enough overall, but no start frame on the 10-frame stride reaches 100 m.
    scores.sufficient = false;
    return scores;
  }
  scores.t_rel = 100.0 * t_sum / static_cast<double>(scores.segments);
  scores.r_rel = 100.0 * kDegPerRad * r_sum / static_cast<double>(scores.segments);
  return scores;
}

AbsErrors abs_errors(std::span<const RelativePose> pred, std::span<const RelativePose> gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("abs_errors: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(gt.size()) + " ground-truth pairs");
  if (pred.empty()) throw std::invalid_argument("abs_errors: no pairs");
  double r = 0, t = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r += std::abs(wrap_degrees(pred[i].delta_theta - gt[i].delta_theta));
    t += std::abs(pred[i].delta_d - gt[i].delta_d);
  }
  const double n = static_cast<double>(pred.size());
  return {r / n, t / n};
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory2D& traj) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "frame,x,y,theta\n";
  char buf[128];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, traj[i].x, traj[i].y, traj[i].theta);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Trajectory2D read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame,x,y,theta")
    throw std::runtime_error(path.string() + ":1: expected header frame,x,y,theta");
  Trajectory2D traj;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    double v[4];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int f = 0; f < 4; ++f) {
      const auto [next, ec] = std::from_chars(p, end, v[f]);
      if (ec != std::errc()) throw std::runtime_error(where + ": bad field " + std::to_string(f + 1));
      p = next;
      if (f < 3) {
        if (p == end || *p != ',') throw std::runtime_error(where + ": expected 4 comma-separated fields");
        ++p;
      }
    }
    if (p != end) throw std::runtime_error(where + ": trailing characters");
    if (v[0] != static_cast<double>(traj.size())) throw std::runtime_error(where + ": frame index out of sequence");
    traj.push_back({v[1], v[2], v[3]});
  }
  return traj;
}

void export_trajectory(const Trajectory2D& traj, const std::filesystem::path& csv_path,
                       const std::filesystem::path& kitti_path) {
  write_trajectory_csv(csv_path, traj);
  const auto poses = lift_to_3d(traj);
  write_kitti_poses(kitti_path, poses);
}

}  // namespace lcodom
