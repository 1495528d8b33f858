#include "lcodom/dataset.hpp"

#include <bit>
#include <cstdio>
#include <exception>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "lcodom/hash.hpp"

namespace lcodom {

static_assert(std::endian::native == std::endian::little, "dataset files are written as native little-endian floats");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kScansFile = "scans.f32";
constexpr const char* kImagesFile = "images.f32";
constexpr const char* kLabelsFile = "labels.csv";
constexpr const char* kPosesFile = "poses.txt";

FileRecord record_of(const fs::path& path) { return {fs::file_size(path), sha256_file(path)}; }

void write_floats(std::ofstream& out, std::span<const float> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DatasetError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string DatasetManifest::to_json() const {
  json j;
  j["format"] = "lcodom-preprocessed";
  j["version"] = kVersion;
  j["scan_bins"] = kScanBins;
  j["image_width"] = options.image_width;
  j["image_height"] = options.image_height;
  j["max_range_m"] = options.max_range;
  j["elevation_band_deg"] = options.elevation_band_deg;
  j["image_normalization"] = "pixel/255-0.5";
  json seqs = json::array();
  for (const auto& s : sequences) {
    json js;
    js["id"] = s.id;
    js["frames"] = s.frames;
    js["pairs"] = s.frames > 0 ? s.frames - 1 : 0;
    js["empty_scans"] = s.empty_scans;
    js["clamped_points"] = s.clamped_points;
    for (const auto& [name, rec] : s.files) js["files"][name] = {{"bytes", rec.bytes}, {"sha256", rec.sha256}};
    seqs.push_back(js);
  }
  j["sequences"] = seqs;
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.at("format") != "lcodom-preprocessed") throw DatasetError("manifest format is not lcodom-preprocessed");
    if (j.at("version") != kVersion) throw DatasetError("unsupported manifest version");
    if (j.at("scan_bins") != kScanBins) throw DatasetError("manifest scan_bins differs from 3601");
    m.options.image_width = j.at("image_width");
    m.options.image_height = j.at("image_height");
    m.options.max_range = j.at("max_range_m");
    m.options.elevation_band_deg = j.at("elevation_band_deg");
    for (const auto& js : j.at("sequences")) {
      SequenceManifest s;
      s.id = js.at("id");
      s.frames = js.at("frames");
      s.empty_scans = js.at("empty_scans");
      s.clamped_points = js.at("clamped_points");
      for (const auto& [name, rec] : js.at("files").items()) s.files[name] = {rec.at("bytes"), rec.at("sha256")};
      m.sequences.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw DatasetError((root / "manifest.json").string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const SequenceManifest& DatasetManifest::sequence(const std::string& id) const {
  for (const auto& s : sequences)
    if (s.id == id) return s;
  throw DatasetError("sequence " + id + " is not in the manifest");
}

std::vector<RelativePose> read_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  if (line != "pair,delta_d,delta_theta") throw DatasetError(path.string() + ":1: unexpected header");
  std::vector<RelativePose> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t pair = 0;
    RelativePose p;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf%c", &pair, &p.delta_d, &p.delta_theta, &tail) != 3 ||
        pair != labels.size()) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": malformed label row");
    }
    labels.push_back(p);
  }
  return labels;
}

void write_labels_csv(const fs::path& path, const std::vector<RelativePose>& labels) {
  std::ostringstream out;
  out << "pair,delta_d,delta_theta\n";
  char buf[96];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, labels[i].delta_d, labels[i].delta_theta);
    out << buf;
  }
  write_text_atomic(path, out.str());
}

SequenceManifest ingest_sequence(const RawSequence& raw, const fs::path& out_root, const IngestOptions& options) {
  const auto poses = read_kitti_poses(raw.poses);
  if (poses.size() != raw.scans.size()) {
    throw DatasetError(raw.poses.string() + ": " + std::to_string(poses.size()) + " poses for " +
                       std::to_string(raw.scans.size()) + " frames");
  }
  std::vector<RelativePose> labels;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    try {
      labels.push_back(relative_pose_from_gt(poses[i - 1], poses[i]));
    } catch (const std::exception& e) {
      throw DatasetError(raw.poses.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }

  const fs::path dir = out_root / raw.id;
  fs::create_directories(dir);
  std::ofstream scans_out(dir / kScansFile, std::ios::binary | std::ios::trunc);
  std::ofstream images_out(dir / kImagesFile, std::ios::binary | std::ios::trunc);
  if (!scans_out || !images_out) throw DatasetError(dir.string() + ": cannot create output files");

  SequenceManifest manifest;
  manifest.id = raw.id;
  manifest.frames = raw.scans.size();
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_frames);
  for (std::size_t start = 0; start < manifest.frames; start += chunk) {
    const std::size_t n = std::min(chunk, manifest.frames - start);
    std::vector<ScanVector> scans(n);
    std::vector<Tensor32> images(n);
    std::vector<ScanEncodeStats> stats(n);
    std::vector<std::optional<std::string>> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t f = start + k;
      try {
        const auto cloud = read_velodyne_bin(raw.scans[f]);
        scans[k] = encode_scan(extract_planar_layer(cloud, options.elevation_band_deg), options.max_range, &stats[k]);
        images[k] = preprocess_image(read_png(raw.images[f]), options.image_width, options.image_height);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (errors[k]) throw DatasetError("sequence " + raw.id + " frame " + frame_name(start + k) + ": " + *errors[k]);
      write_floats(scans_out, scans[k].values());
      write_floats(images_out, images[k].span());
      if (stats[k].points == 0) ++manifest.empty_scans;
      manifest.clamped_points += stats[k].clamped;
    }
  }
  scans_out.close();
  images_out.close();
  if (!scans_out || !images_out) throw DatasetError(dir.string() + ": write failed");

  write_labels_csv(dir / kLabelsFile, labels);
  write_kitti_poses(dir / kPosesFile, poses);
  for (const char* name : {kScansFile, kImagesFile, kLabelsFile, kPosesFile}) manifest.files[name] = record_of(dir / name);
  return manifest;
}

DatasetManifest ingest(const fs::path& raw_root, const std::vector<std::string>& ids, const fs::path& out_root,
                       const IngestOptions& options) {
  DatasetManifest manifest;
  manifest.options = options;
  std::vector<fs::path> created;
  try {
    fs::create_directories(out_root);
    for (const auto& id : ids) {
      const auto raw = locate_sequence(raw_root, id);
      if (!fs::exists(out_root / id)) created.push_back(out_root / id);
      manifest.sequences.push_back(ingest_sequence(raw, out_root, options));
    }
    write_text_atomic(out_root / "manifest.json", manifest.to_json());
  } catch (...) {
    std::error_code ec;
    for (const auto& dir : created) fs::remove_all(dir, ec);
    fs::remove(out_root / "manifest.json.tmp", ec);
    throw;
  }
  return manifest;
}

PreprocessedSequence::PreprocessedSequence(const fs::path& root, const SequenceManifest& manifest,
                                           const IngestOptions& options, bool verify)
    : manifest_(manifest), options_(options) {
  const fs::path dir = root / manifest.id;
  for (const char* name : {kScansFile, kImagesFile, kLabelsFile, kPosesFile}) {
    const auto it = manifest.files.find(name);
    if (it == manifest.files.end()) throw DatasetError("manifest for " + manifest.id + " lacks " + name);
    const fs::path path = dir / name;
    if (!fs::is_regular_file(path)) throw DatasetError(path.string() + ": missing");
    if (fs::file_size(path) != it->second.bytes) throw DatasetError(path.string() + ": size differs from manifest");
    if (verify && sha256_file(path) != it->second.sha256) throw DatasetError(path.string() + ": hash differs from manifest");
  }
  const std::uint64_t image_floats = 3 * options.image_width * options.image_height;
  if (manifest.files.at(kScansFile).bytes != manifest.frames * kScanBins * 4 ||
      manifest.files.at(kImagesFile).bytes != manifest.frames * image_floats * 4) {
    throw DatasetError(dir.string() + ": data file sizes do not match the frame count");
  }
  labels_ = read_labels_csv(dir / kLabelsFile);
  poses_ = read_kitti_poses(dir / kPosesFile);
  if (poses_.size() != manifest.frames || labels_.size() + 1 != std::max<std::size_t>(manifest.frames, 1)) {
    throw DatasetError(dir.string() + ": label/pose counts do not match the frame count");
  }
  scans_.open(dir / kScansFile, std::ios::binary);
  images_.open(dir / kImagesFile, std::ios::binary);
}

ScanVector PreprocessedSequence::scan(std::size_t frame) const {
  if (frame >= frames()) throw std::out_of_range("scan frame out of range");
  ScanVector v;
  scans_.seekg(static_cast<std::streamoff>(frame * kScanBins * 4));
  scans_.read(reinterpret_cast<char*>(v.values().data()), kScanBins * 4);
  if (!scans_) throw DatasetError("read failed for scan " + std::to_string(frame) + " of " + id());
  return v;
}

Tensor32 PreprocessedSequence::image(std::size_t frame) const {
  if (frame >= frames()) throw std::out_of_range("image frame out of range");
  Tensor32 t({3, options_.image_height, options_.image_width});
  images_.seekg(static_cast<std::streamoff>(frame * t.size() * 4));
  images_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
  if (!images_) throw DatasetError("read failed for image " + std::to_string(frame) + " of " + id());
  return t;
}

InMemoryPairDataset InMemoryPairDataset::load_all(const PairDataset& source) {
  std::vector<PairSample> samples;
  samples.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    samples.push_back({source.laser_input(i), source.camera_input(i), source.label(i)});
  }
  return InMemoryPairDataset(std::move(samples));
}

SequencePairDataset::SequencePairDataset(const fs::path& root, const std::vector<std::string>& ids, bool verify) {
  const auto manifest = DatasetManifest::load(root);
  for (const auto& id : ids) {
    sequences_.push_back(std::make_unique<PreprocessedSequence>(root, manifest.sequence(id), manifest.options, verify));
    const std::size_t s = sequences_.size() - 1;
    for (std::size_t f = 0; f + 1 < sequences_.back()->frames(); ++f) index_.emplace_back(s, f);
  }
}

Tensor32 SequencePairDataset::laser_input(std::size_t i) const {
  const auto [s, f] = index_.at(i);
  return stack_scans(sequences_[s]->scan(f), sequences_[s]->scan(f + 1));
}

Tensor32 SequencePairDataset::camera_input(std::size_t i) const {
  const auto [s, f] = index_.at(i);
  return stack_images(sequences_[s]->image(f), sequences_[s]->image(f + 1));
}

RelativePose SequencePairDataset::label(std::size_t i) const {
  const auto [s, f] = index_.at(i);
  return sequences_[s]->labels()[f];
}

}  // namespace lcodom
