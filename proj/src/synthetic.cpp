#include "lcodom/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lcodom/kitti.hpp"
#include "lcodom/rng.hpp"

namespace lcodom {
namespace {

namespace fs = std::filesystem;
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kCameraHeight = 1.65;
constexpr double kMaxRayRange = 120.0;

struct Pillar {
  double x;  // world lateral (camera x at frame 0)
  double z;  // world forward
  double radius;
  double height;
  std::array<std::uint8_t, 3> color;
};

std::vector<Pillar> make_world(const SyntheticOptions& o, const std::vector<PoseMatrix>& poses, Rng& rng) {
  std::vector<Pillar> world;
  // Keep pillars off the driven path.
  auto clear_of_path = [&](double x, double z, double r) {
    for (const auto& p : poses) {
      if (std::hypot(p.translation(0) - x, p.translation(2) - z) < r + 1.5) return false;
    }
    return true;
  };
  const double cx = poses.back().translation(0) * 0.5;
  const double cz = poses.back().translation(2) * 0.5;
  while (world.size() < o.pillars) {
    const double ang = rng.uniform(0.0, 2 * std::numbers::pi);
    const double dist = std::sqrt(rng.uniform(0.0, 1.0)) * o.world_radius_m;
    const double x = cx + dist * std::sin(ang), z = cz + dist * std::cos(ang);
    const double r = rng.uniform(0.3, 1.5);
    if (!clear_of_path(x, z, r)) continue;
    world.push_back({x, z, r, rng.uniform(2.0, 8.0),
                     {static_cast<std::uint8_t>(40 + rng.below(200)), static_cast<std::uint8_t>(40 + rng.below(200)),
                      static_cast<std::uint8_t>(40 + rng.below(200))}});
  }
  return world;
}

/// Nearest pillar hit along a planar ray; returns distance or +inf.
double cast(const std::vector<Pillar>& world, double ox, double oz, double dx, double dz, std::size_t* hit) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < world.size(); ++i) {
    const auto& p = world[i];
    const double fx = ox - p.x, fz = oz - p.z;
    const double b = fx * dx + fz * dz;
    const double c = fx * fx + fz * fz - p.radius * p.radius;
    const double disc = b * b - c;
    if (disc < 0) continue;
    const double t = -b - std::sqrt(disc);
    if (t > 1e-6 && t < best) {
      best = t;
      if (hit) *hit = i;
    }
  }
  return best;
}

std::vector<Point3> render_lidar(const SyntheticOptions& o, const std::vector<Pillar>& world, const PoseMatrix& pose) {
  const double heading = yaw_degrees(pose.rotation) * kDegToRad;
  const double ox = pose.translation(0), oz = pose.translation(2);
  std::vector<Point3> cloud;
  const auto steps = static_cast<std::size_t>(std::llround(360.0 / o.lidar_azimuth_step_deg));
  for (std::size_t s = 0; s < steps; ++s) {
    // Sample at bin centers so every ray falls unambiguously inside one 0.1 deg bin.
    const double az = (static_cast<double>(s) + 0.25) * o.lidar_azimuth_step_deg;
    // Lidar azimuth is counter-clockwise from forward (toward the left),
    // while camera yaw turns forward toward +x (right).
    const double world_angle = heading - az * kDegToRad;
    const double dx = std::sin(world_angle), dz = std::cos(world_angle);
    const double range = cast(world, ox, oz, dx, dz, nullptr);
    if (!(range < kMaxRayRange)) continue;
    for (double elev : o.lidar_ring_elevations_deg) {
      const double a = az * kDegToRad;
      const double up = range * std::tan(elev * kDegToRad);
      cloud.push_back({static_cast<float>(range * std::cos(a)), static_cast<float>(range * std::sin(a)),
                       static_cast<float>(up)});
    }
  }
  return cloud;
}

RgbImage render_camera(const SyntheticOptions& o, const std::vector<Pillar>& world, const PoseMatrix& pose) {
  const std::size_t w = o.image_width, h = o.image_height;
  RgbImage img{w, h, 3, std::vector<std::uint8_t>(w * h * 3)};
  const double focal = (static_cast<double>(w) / 2.0) / std::tan(45.0 * kDegToRad);
  const double cx = static_cast<double>(w) / 2.0, cy = static_cast<double>(h) / 2.0;
  const double heading = yaw_degrees(pose.rotation) * kDegToRad;
  const double ox = pose.translation(0), oz = pose.translation(2);
  const double ch = std::cos(heading), sh = std::sin(heading);
  for (std::size_t u = 0; u < w; ++u) {
    const double xc = (static_cast<double>(u) + 0.5 - cx) / focal;
    // Camera-frame ray (xc, ., 1) rotated into the world ground plane.
    const double norm = std::hypot(xc, 1.0);
    const double dx = (ch * xc + sh) / norm, dz = (-sh * xc + ch) / norm;
    std::size_t hit = 0;
    const double t = cast(world, ox, oz, dx, dz, &hit);
    const double depth = t * (1.0 / norm);  // along the optical axis
    for (std::size_t v = 0; v < h; ++v) {
      const double yc = (static_cast<double>(v) + 0.5 - cy) / focal;  // down is positive
      std::array<double, 3> rgb{};
      bool pillar = false;
      if (std::isfinite(t)) {
        const double height_at = -yc * depth + kCameraHeight;  // meters above ground
        if (height_at >= 0.0 && height_at <= world[hit].height) {
          const double shade = std::clamp(1.2 - t / 80.0, 0.3, 1.0);
          for (int k = 0; k < 3; ++k) rgb[k] = world[hit].color[k] * shade * (0.85 + 0.15 * std::fmod(height_at, 1.0));
          pillar = true;
        }
      }
      if (!pillar) {
        if (yc > 1e-9) {
          const double ground = kCameraHeight / yc;  // depth of the ground point
          const double gx = ox + ground * (ch * xc + sh), gz = oz + ground * (-sh * xc + ch);
          const bool dark = (static_cast<long>(std::floor(gx / 2.0)) + static_cast<long>(std::floor(gz / 2.0))) & 1;
          const double fade = std::clamp(1.0 - ground / 150.0, 0.4, 1.0);
          const double base = dark ? 70.0 : 150.0;
          rgb = {base * fade, base * fade * 0.95, base * fade * 0.85};
        } else {
          rgb = {120.0 + 80.0 * (-yc), 160.0 + 60.0 * (-yc), 230.0};
        }
      }
      for (int k = 0; k < 3; ++k) img.at(v, u, k) = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[k]), 0L, 255L));
    }
  }
  return img;
}

}  // namespace

std::vector<PoseMatrix> integrate_motion_to_poses(const std::vector<RelativePose>& motion) {
  std::vector<PoseMatrix> poses{PoseMatrix::identity()};
  double x = 0, z = 0, heading = 0;
  for (const auto& m : motion) {
    heading += m.delta_theta;
    x += m.delta_d * std::sin(heading * kDegToRad);
    z += m.delta_d * std::cos(heading * kDegToRad);
    poses.push_back(PoseMatrix::planar(x, z, heading));
  }
  return poses;
}

std::vector<RelativePose> smooth_motion(double length_m, std::uint64_t seed) {
  Rng rng(seed);
  const double a1 = rng.uniform(1.0, 3.0), a2 = rng.uniform(0.5, 1.5);
  const double p1 = rng.uniform(150.0, 300.0), p2 = rng.uniform(40.0, 90.0);
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  std::vector<RelativePose> motion;
  double travelled = 0;
  for (std::size_t i = 0; travelled < length_m; ++i) {
    const double t = static_cast<double>(i);
    const double step = 1.0 + 0.2 * std::sin(t / 37.0 + phase);
    const double turn = a1 * std::sin(2 * std::numbers::pi * t / p1 + phase) + a2 * std::sin(2 * std::numbers::pi * t / p2);
    motion.push_back({step, turn});
    travelled += step;
  }
  return motion;
}

SyntheticSequence generate_sequence(const SyntheticOptions& o) {
  if (o.frames < 1) throw std::invalid_argument("synthetic sequence needs at least one frame");
  Rng rng(mix_seed(o.seed, 0x5EC));
  SyntheticSequence seq;
  for (std::size_t i = 1; i < o.frames; ++i) {
    seq.motion.push_back({rng.uniform(o.min_step_m, o.max_step_m), rng.uniform(-o.max_turn_deg, o.max_turn_deg)});
  }
  seq.poses = integrate_motion_to_poses(seq.motion);
  Rng world_rng(mix_seed(o.seed, 0x3071D));
  const auto world = make_world(o, seq.poses, world_rng);
  seq.clouds.resize(o.frames);
  seq.images.resize(o.frames);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < o.frames; ++i) {
    seq.clouds[i] = render_lidar(o, world, seq.poses[i]);
    seq.images[i] = render_camera(o, world, seq.poses[i]);
  }
  return seq;
}

void write_raw_sequence(const SyntheticSequence& seq, const fs::path& root, const std::string& id) {
  const fs::path dir = root / "sequences" / id;
  fs::create_directories(dir / "velodyne");
  fs::create_directories(dir / "image_2");
  fs::create_directories(root / "poses");
  for (std::size_t i = 0; i < seq.poses.size(); ++i) {
    write_velodyne_bin(dir / "velodyne" / (frame_name(i) + ".bin"), seq.clouds[i]);
    write_png(dir / "image_2" / (frame_name(i) + ".png"), seq.images[i]);
  }
  write_kitti_poses(root / "poses" / (id + ".txt"), seq.poses);
}

}  // namespace lcodom
