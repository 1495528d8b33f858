#pragma once

// Preprocessed dataset on disk:
//   <root>/manifest.json
//   <root>/<seq>/scans.f32    frames x 3601 little-endian float32
//   <root>/<seq>/images.f32   frames x 3 x H x W little-endian float32
//   <root>/<seq>/labels.csv   pair,delta_d,delta_theta (pair i = frame i -> i+1)
//   <root>/<seq>/poses.txt    ground-truth poses, KITTI text format
// Outputs contain no timestamps, so re-ingesting identical input reproduces
// every byte.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lcodom/image.hpp"
#include "lcodom/kitti.hpp"
#include "lcodom/pose.hpp"
#include "lcodom/scan.hpp"

namespace lcodom {

struct FileRecord {
  std::uint64_t bytes = 0;
  std::string sha256;
};

struct SequenceManifest {
  std::string id;
  std::size_t frames = 0;
  std::size_t empty_scans = 0;
  std::size_t clamped_points = 0;
  std::map<std::string, FileRecord> files;
};

struct IngestOptions {
  std::size_t image_width = kImageWidth;
  std::size_t image_height = kImageHeight;
  double max_range = kDefaultMaxRange;
  double elevation_band_deg = kDefaultElevationBandDeg;
  std::size_t chunk_frames = 32;  // frames preprocessed concurrently before writing
};

struct DatasetManifest {
  static constexpr int kVersion = 1;
  IngestOptions options;
  std::vector<SequenceManifest> sequences;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  static DatasetManifest load(const std::filesystem::path& root);
  const SequenceManifest& sequence(const std::string& id) const;
};

/// Preprocesses one raw sequence into <out_root>/<id>/ and returns its manifest
/// entry. Frame order is preserved regardless of the worker count.
SequenceManifest ingest_sequence(const RawSequence& raw, const std::filesystem::path& out_root,
                                 const IngestOptions& options = {});

/// Ingests several sequences and writes manifest.json. On failure the output
/// directories created by this call are removed.
DatasetManifest ingest(const std::filesystem::path& raw_root, const std::vector<std::string>& ids,
                       const std::filesystem::path& out_root, const IngestOptions& options = {});

/// Random access to one preprocessed sequence. Not thread-safe.
class PreprocessedSequence {
 public:
  /// Verifies file sizes, and SHA-256 hashes when verify is true.
  PreprocessedSequence(const std::filesystem::path& root, const SequenceManifest& manifest,
                       const IngestOptions& options, bool verify = true);

  const std::string& id() const { return manifest_.id; }
  std::size_t frames() const { return manifest_.frames; }
  ScanVector scan(std::size_t frame) const;
  Tensor32 image(std::size_t frame) const;
  const std::vector<RelativePose>& labels() const { return labels_; }
  const std::vector<PoseMatrix>& poses() const { return poses_; }

 private:
  SequenceManifest manifest_;
  IngestOptions options_;
  mutable std::ifstream scans_;
  mutable std::ifstream images_;
  std::vector<RelativePose> labels_;
  std::vector<PoseMatrix> poses_;
};

std::vector<RelativePose> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const std::vector<RelativePose>& labels);

/// Consecutive-frame training/evaluation pairs.
class PairDataset {
 public:
  virtual ~PairDataset() = default;
  virtual std::size_t size() const = 0;
  virtual Tensor32 laser_input(std::size_t i) const = 0;   // [2, 3601]
  virtual Tensor32 camera_input(std::size_t i) const = 0;  // [6, H, W]
  virtual RelativePose label(std::size_t i) const = 0;
};

struct PairSample {
  Tensor32 scans;
  Tensor32 images;
  RelativePose label;
};

class InMemoryPairDataset final : public PairDataset {
 public:
  InMemoryPairDataset() = default;
  explicit InMemoryPairDataset(std::vector<PairSample> samples) : samples_(std::move(samples)) {}
  /// Copies every pair of another dataset into memory.
  static InMemoryPairDataset load_all(const PairDataset& source);

  void add(PairSample sample) { samples_.push_back(std::move(sample)); }
  std::size_t size() const override { return samples_.size(); }
  Tensor32 laser_input(std::size_t i) const override { return samples_.at(i).scans; }
  Tensor32 camera_input(std::size_t i) const override { return samples_.at(i).images; }
  RelativePose label(std::size_t i) const override { return samples_.at(i).label; }

 private:
  std::vector<PairSample> samples_;
};

/// Pairs of one or more preprocessed sequences, in sequence then frame order.
class SequencePairDataset final : public PairDataset {
 public:
  SequencePairDataset(const std::filesystem::path& root, const std::vector<std::string>& ids, bool verify = true);

  std::size_t size() const override { return index_.size(); }
  Tensor32 laser_input(std::size_t i) const override;
  Tensor32 camera_input(std::size_t i) const override;
  RelativePose label(std::size_t i) const override;
  const std::vector<std::unique_ptr<PreprocessedSequence>>& sequences() const { return sequences_; }

 private:
  std::vector<std::unique_ptr<PreprocessedSequence>> sequences_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;  // (sequence, first frame)
};

}  // namespace lcodom
