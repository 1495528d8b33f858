#include "lcodom/kitti.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace lcodom {

namespace fs = std::filesystem;

std::vector<Point3> read_velodyne_bin(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DatasetError(path.string() + ": cannot open");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 16 != 0) throw DatasetError(path.string() + ": size is not a multiple of 16 bytes");
  in.seekg(0);
  std::vector<float> raw(bytes / 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw DatasetError(path.string() + ": read failed");
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : raw) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
  }
  std::vector<Point3> points(bytes / 16);
  for (std::size_t i = 0; i < points.size(); ++i) points[i] = {raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]};
  return points;
}

void write_velodyne_bin(const fs::path& path, std::span<const Point3> points) {
  std::vector<float> raw;
  raw.reserve(points.size() * 4);
  for (const auto& p : points) raw.insert(raw.end(), {p.x, p.y, p.z, 0.0f});
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : raw) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw DatasetError(path.string() + ": write failed");
}

std::string frame_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

namespace {

std::vector<fs::path> list_frames(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DatasetError(dir.string() + ": missing directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].stem() != frame_name(i)) {
      throw DatasetError(dir.string() + ": expected frame " + frame_name(i) + ext + ", found " +
                         files[i].filename().string());
    }
  }
  return files;
}

}  // namespace

RawSequence locate_sequence(const fs::path& root, const std::string& id) {
  RawSequence seq;
  seq.id = id;
  const fs::path dir = root / "sequences" / id;
  seq.scans = list_frames(dir / "velodyne", ".bin");
  seq.images = list_frames(dir / "image_2", ".png");
  if (seq.scans.size() != seq.images.size()) {
    throw DatasetError("sequence " + id + ": " + std::to_string(seq.scans.size()) + " scans but " +
                       std::to_string(seq.images.size()) + " images");
  }
  seq.poses = root / "poses" / (id + ".txt");
  if (!fs::is_regular_file(seq.poses)) throw DatasetError(seq.poses.string() + ": missing pose file");
  return seq;
}

std::vector<std::string> split_sequences(const std::string& split) {
  if (split == "train") return {"00", "02", "03", "04", "05", "06", "08", "09"};
  if (split == "test") return {"01", "07", "10"};
  throw std::invalid_argument("unknown split '" + split + "' (expected train or test)");
}

}  // namespace lcodom
