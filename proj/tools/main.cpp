#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lcodom/checkpoint.hpp"
#include "lcodom/dataset.hpp"
#include "lcodom/hash.hpp"
#include "lcodom/kitti.hpp"
#include "lcodom/odometry.hpp"
#include "lcodom/report.hpp"
#include "lcodom/runtime.hpp"
#include "lcodom/synthetic.hpp"
#include "lcodom/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace lcodom::cli {
namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kDataRootEnv = "LCODOM_DATA_ROOT";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Files written by a command. Unless commit() is called, they are deleted on
// destruction, together with the output directory if this command created it.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw UsageError("--out is required");
    created_ = !fs::exists(dir_);
    fs::create_directories(dir_);
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    if (created_) {
      fs::remove_all(dir_, ec);
      return;
    }
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);  // only if empty
  }

  const fs::path& dir() const { return dir_; }
  fs::path file(const fs::path& relative) {
    fs::path p = dir_ / relative;
    for (fs::path d = p.parent_path(); d != dir_ && !fs::exists(d); d = d.parent_path()) dirs_.push_back(d);
    fs::create_directories(p.parent_path());
    files_.push_back(p);
    return p;
  }
  const std::vector<fs::path>& files() const { return files_; }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  bool created_ = false;
  bool committed_ = false;
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Common {
  std::vector<std::string> argv;
  std::string data;
  std::string sequences;
  std::string split;
  std::string out;
  int threads = 0;
};

fs::path data_root(const Common& c) {
  if (!c.data.empty()) return c.data;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  throw UsageError(std::string("no dataset root: pass --data or set ") + kDataRootEnv);
}

std::vector<std::string> sequence_ids(const Common& c, const std::string& default_split) {
  if (!c.sequences.empty() && !c.split.empty()) throw UsageError("--sequences and --split are mutually exclusive");
  if (!c.sequences.empty()) return split_list(c.sequences);
  return split_sequences(c.split.empty() ? default_split : c.split);
}

ordered_json file_entry(const fs::path& p) {
  return {{"path", p.string()}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}};
}

ordered_json dataset_entry(const fs::path& root, const std::vector<std::string>& ids) {
  ordered_json j;
  j["root"] = root.string();
  j["manifest"] = file_entry(root / "manifest.json");
  j["sequences"] = ids;
  return j;
}

// Records how to reproduce a command and the hashes of what it read and wrote.
void write_run_manifest(OutputGuard& guard, const Common& c, const std::string& command, ordered_json details,
                        const std::vector<fs::path>& inputs) {
  ordered_json j;
  j["tool"] = "lcodom";
  j["version"] = kVersion;
  j["command"] = command;
  j["argv"] = c.argv;
  for (auto& [k, v] : details.items()) j[k] = v;
  ordered_json in = ordered_json::array();
  for (const auto& p : inputs) in.push_back(file_entry(p));
  j["inputs"] = std::move(in);
  ordered_json out = ordered_json::array();
  for (const auto& p : guard.files()) out.push_back(file_entry(p));
  j["outputs"] = std::move(out);
  write_text(guard.file("run_manifest.json"), j.dump(2) + "\n");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::size_t frames = 120;
  std::uint64_t seed = 1;
  std::size_t image_width = kImageWidth;
  std::size_t image_height = kImageHeight;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  OutputGuard guard(c.out);
  const auto ids = c.sequences.empty() ? std::vector<std::string>{"00"} : split_list(c.sequences);
  ordered_json seqs = ordered_json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    SyntheticOptions opts;
    opts.frames = a.frames;
    opts.seed = mix_seed(a.seed, i);
    opts.image_width = a.image_width;
    opts.image_height = a.image_height;
    const auto seq = generate_sequence(opts);
    write_raw_sequence(seq, guard.dir(), ids[i]);
    seqs.push_back({{"id", ids[i]}, {"frames", a.frames}, {"seed", opts.seed}});
    spdlog::info("synthetic sequence {}: {} frames", ids[i], a.frames);
  }
  for (const auto& entry : fs::recursive_directory_iterator(guard.dir()))
    if (entry.is_regular_file()) guard.file(fs::relative(entry.path(), guard.dir()));
  write_run_manifest(guard, c, "synth", {{"seed", a.seed}, {"sequences", seqs}}, {});
  guard.commit();
  return 0;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string raw;
  IngestOptions options;
};

int cmd_ingest(const Common& c, const IngestArgs& a) {
  if (a.raw.empty()) throw UsageError("--raw is required");
  const auto ids = sequence_ids(c, "train");
  const fs::path out = c.out.empty() ? data_root(c) : fs::path(c.out);
  OutputGuard guard(out);
  const auto manifest = ingest(a.raw, ids, out, a.options);
  for (const auto& s : manifest.sequences) {
    spdlog::info("sequence {}: {} frames, {} pairs, {} empty scans, {} ranges clamped at {} m", s.id, s.frames,
                 s.frames ? s.frames - 1 : 0, s.empty_scans, s.clamped_points, a.options.max_range);
    for (const auto& [name, rec] : s.files) guard.file(fs::path(s.id) / name);
  }
  guard.file("manifest.json");
  std::vector<fs::path> inputs;
  for (const auto& id : ids) inputs.push_back(locate_sequence(a.raw, id).poses);
  write_run_manifest(guard, c, "ingest", {{"raw", a.raw}, {"sequences", ids}}, inputs);
  guard.commit();
  return 0;
}

// ---- train / pretrain -----------------------------------------------------

struct TrainArgs {
  std::string stage;
  std::string config_file;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta, lr;
  std::optional<std::size_t> batch, epochs, max_steps;
  std::string laser_ckpt, cam_ckpt, resume;
  std::size_t log_every = 10;
};

TrainConfig build_config(const TrainArgs& a, Stage stage) {
  std::string text = a.config_file.empty() ? std::string() : read_text(a.config_file);
  auto kv = parse_key_values(text);
  auto set = [&kv](const std::string& key, const std::string& value) { kv[key] = value; };
  set("stage", std::string(stage_name(stage)));
  if (!a.model.empty()) set("model", a.model);
  if (a.seed) set("seed", std::to_string(*a.seed));
  if (a.beta) set("beta", fmt::format("{}", *a.beta));
  if (a.lr) set("lr", fmt::format("{}", *a.lr));
  if (a.batch) set("batch", std::to_string(*a.batch));
  if (a.epochs) set("epochs", std::to_string(*a.epochs));
  if (a.max_steps) set("max_steps", std::to_string(*a.max_steps));
  // A preset line must come first so explicit keys override it.
  std::string merged;
  if (auto it = kv.find("model"); it != kv.end()) {
    merged += "model = " + it->second + "\n";
    kv.erase(it);
  }
  for (const auto& [k, v] : kv) merged += k + " = " + v + "\n";
  return TrainConfig::from_text(merged);
}

int cmd_train(const Common& c, const TrainArgs& a) {
  const Stage stage = parse_stage(a.stage);
  if (stage == Stage::kFusion && (a.laser_ckpt.empty() || a.cam_ckpt.empty()))
    throw UsageError("fusion training needs both pretrained checkpoints: --laser-ckpt and --cam-ckpt");
  if (stage != Stage::kFusion && (!a.laser_ckpt.empty() || !a.cam_ckpt.empty()))
    throw UsageError("--laser-ckpt/--cam-ckpt apply only to --stage fusion");
  const TrainConfig config = build_config(a, stage);
  const fs::path root = data_root(c);
  const auto ids = sequence_ids(c, "train");

  // Load inputs before creating outputs, so usage and input errors leave nothing behind.
  std::optional<Checkpoint> laser, cam, resume;
  std::vector<fs::path> inputs;
  if (stage == Stage::kFusion) {
    laser = load_checkpoint(a.laser_ckpt);
    cam = load_checkpoint(a.cam_ckpt);
    inputs.insert(inputs.end(), {a.laser_ckpt, a.cam_ckpt});
  }
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    inputs.push_back(a.resume);
  }
  if (!a.config_file.empty()) inputs.push_back(a.config_file);
  const SequencePairDataset data(root, ids);
  spdlog::info("stage {}: {} pairs from {} sequence(s), {} epochs, batch {}, lr {}, beta {}, seed {}",
               stage_name(stage), data.size(), ids.size(), config.epochs, config.batch, config.lr, config.beta,
               config.seed);

  OutputGuard guard(c.out);
  const fs::path loss_path = guard.file("loss.csv");
  std::ofstream loss_csv(loss_path, std::ios::binary | std::ios::trunc);
  loss_csv << "step,epoch,loss\n";
  const auto started = std::chrono::steady_clock::now();
  auto on_step = [&](const LossRecord& r) {
    loss_csv << r.step << ',' << r.epoch << ',' << fmt::format("{:.9g}", r.loss) << '\n';
    if (a.log_every && (r.step + 1) % a.log_every == 0) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      spdlog::info("step {} epoch {} loss {:.5f} ({:.1f} s)", r.step + 1, r.epoch, r.loss, s);
    }
  };

  TrainResult result;
  std::string weights_kind;
  std::vector<std::string> prefixes;
  if (stage == Stage::kFusion) {
    result = train_fusion(data, *laser, *cam, config, resume ? &*resume : nullptr, on_step);
    weights_kind = "model";
    prefixes = {"laser", "cam", "head"};
  } else {
    const Sensor sensor = stage == Stage::kPretrainLaser ? Sensor::kLaser : Sensor::kCamera;
    result = pretrain_single(sensor, data, config, resume ? &*resume : nullptr, on_step);
    weights_kind = "cnn";
    prefixes = {std::string(sensor_prefix(sensor))};
  }
  loss_csv.close();
  if (!loss_csv) throw std::runtime_error("cannot write " + loss_path.string());

  save_checkpoint(result.state, guard.file("state.ckpt"));
  save_checkpoint(export_weights(result.state, prefixes, weights_kind), guard.file("weights.ckpt"));
  write_text(guard.file("config.txt"), config.to_text());
  if (!result.losses.empty())
    spdlog::info("finished {} steps, last batch loss {:.5f}", result.losses.size(), result.losses.back().loss);
  write_run_manifest(guard, c, "train",
                     {{"stage", stage_name(stage)},
                      {"seed", config.seed},
                      {"config", config.to_text()},
                      {"dataset", dataset_entry(root, ids)}},
                     inputs);
  guard.commit();
  return 0;
}

// ---- infer / eval / plot-data ---------------------------------------------

struct LoadedModel {
  Checkpoint ckpt;
  std::unique_ptr<OdometryNet<float>> net;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m{load_checkpoint(path), nullptr};
  const TrainConfig cfg = config_of(m.ckpt);
  m.net = std::make_unique<OdometryNet<float>>(cfg.model);
  ParamStore<float> expected;
  m.net->register_laser(expected);
  m.net->register_cam(expected);
  m.net->register_fusion_heads(expected);
  for (const auto& p : expected) {
    if (!m.ckpt.params.contains(p.name))
      throw CheckpointError(path.string() + " is not a fused model: missing " + p.name);
    if (m.ckpt.params.at(p.name).value.shape() != p.value.shape())
      throw CheckpointError(path.string() + ": shape mismatch for " + p.name);
  }
  return m;
}

struct Predictions {
  std::vector<RelativePose> poses;
  std::vector<Prediction> detail;
  std::vector<double> latency_s;
};

Predictions run_inference(LoadedModel& model, const PairDataset& data) {
  Predictions out;
  if (data.size() > 0) infer(*model.net, model.ckpt.params, data.laser_input(0), data.camera_input(0));  // warm-up
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor32 scans = data.laser_input(i);
    const Tensor32 images = data.camera_input(i);
    const auto t0 = std::chrono::steady_clock::now();
    const Prediction p = infer(*model.net, model.ckpt.params, scans, images);
    out.latency_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    out.poses.push_back(p.pose);
    out.detail.push_back(p);
  }
  return out;
}

void write_predictions_csv(const fs::path& path, const Predictions& p) {
  std::string text = "pair,delta_d,delta_theta,rotation_class,translation_class,latency_s\n";
  for (std::size_t i = 0; i < p.poses.size(); ++i)
    text += fmt::format("{},{:.17g},{:.17g},{},{},{:.9g}\n", i, p.poses[i].delta_d, p.poses[i].delta_theta,
                        p.detail[i].rotation_class, p.detail[i].translation_class, p.latency_s[i]);
  write_text(path, text);
}

// Reads any CSV with pair, delta_d and delta_theta columns (predictions or labels).
std::vector<RelativePose> read_pose_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_list(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error(path.string() + ":1: missing column " + name);
  };
  const std::size_t cp = column("pair"), cd = column("delta_d"), ct = column("delta_theta");
  std::vector<RelativePose> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_list(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != header.size()) throw std::runtime_error(where + ": expected " + std::to_string(header.size()) + " fields");
    try {
      if (std::stoul(f[cp]) != out.size()) throw std::runtime_error(where + ": pair index out of sequence");
      out.push_back({std::stod(f[cd]), std::stod(f[ct])});
    } catch (const std::logic_error&) {
      throw std::runtime_error(where + ": malformed number");
    }
  }
  return out;
}

fs::path predictions_file(const fs::path& dir, const std::string& id) {
  for (const char* name : {"predictions.csv", "labels.csv"})
    if (fs::exists(dir / id / name)) return dir / id / name;
  throw std::runtime_error("no predictions.csv or labels.csv for sequence " + id + " under " + dir.string());
}

struct EvalArgs {
  std::string checkpoint;
  std::string predictions;
  std::string mode = "heading-integrated";
};

int cmd_infer(const Common& c, const EvalArgs& a) {
  if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const fs::path root = data_root(c);
  const auto ids = sequence_ids(c, "test");
  auto model = load_model(a.checkpoint);
  OutputGuard guard(c.out);
  for (const auto& id : ids) {
    const SequencePairDataset data(root, {id});
    const auto p = run_inference(model, data);
    write_predictions_csv(guard.file(fs::path(id) / "predictions.csv"), p);
    if (!p.latency_s.empty()) {
      const auto l = latency_stats(p.latency_s);
      spdlog::info("sequence {}: {} pairs, {:.4f} s/frame mean, {:.4f} p95", id, p.poses.size(), l.mean_s, l.p95_s);
    }
  }
  write_run_manifest(guard, c, "infer", {{"dataset", dataset_entry(root, ids)}}, {a.checkpoint});
  guard.commit();
  return 0;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
  if (a.checkpoint.empty() == a.predictions.empty()) throw UsageError("pass exactly one of --checkpoint or --predictions");
  const IntegrationMode mode = parse_integration_mode(a.mode);
  const fs::path root = data_root(c);
  const auto ids = sequence_ids(c, "test");
  std::optional<LoadedModel> model;
  if (!a.checkpoint.empty()) model = load_model(a.checkpoint);

  OutputGuard guard(c.out);
  EvalReport report{std::string(integration_mode_name(mode)), model ? "checkpoint" : "predictions", {}};
  std::vector<fs::path> inputs;
  if (model) inputs.push_back(a.checkpoint);
  for (const auto& id : ids) {
    const SequencePairDataset data(root, {id});
    const auto& seq = *data.sequences().front();
    std::vector<RelativePose> pred;
    std::optional<LatencyStats> latency;
    if (model) {
      const auto p = run_inference(*model, data);
      write_predictions_csv(guard.file(fs::path(id) / "predictions.csv"), p);
      pred = p.poses;
      if (!p.latency_s.empty()) latency = latency_stats(p.latency_s);
    } else {
      const fs::path file = predictions_file(a.predictions, id);
      pred = read_pose_csv(file);
      inputs.push_back(file);
    }
    if (pred.size() != seq.labels().size())
      throw std::runtime_error("sequence " + id + ": " + std::to_string(pred.size()) + " predictions for " +
                               std::to_string(seq.labels().size()) + " pairs");
    auto e = evaluate_sequence(id, pred, seq.labels(), seq.poses(), mode, latency);
    const auto pred_traj = integrate(pred, mode);
    export_trajectory(pred_traj, guard.file(fs::path(id) / "trajectory_pred.csv"),
                      guard.file(fs::path(id) / "poses_pred.txt"));
    Trajectory2D gt_traj;
    for (const auto& p : seq.poses()) gt_traj.push_back(project_to_2d(p));
    write_trajectory_csv(guard.file(fs::path(id) / "trajectory_gt.csv"), gt_traj);
    if (e.drift.sufficient)
      spdlog::info("sequence {}: t_rel {:.3f}% r_rel {:.3f} deg/100m sigma_r {:.4f} sigma_t {:.4f}", id, e.drift.t_rel,
                   e.drift.r_rel, e.abs.sigma_r, e.abs.sigma_t);
    else
      spdlog::warn("sequence {}: path {:.1f} m, insufficient length for drift metrics", id, e.path_length_m);
    report.sequences.push_back(std::move(e));
  }
  write_text(guard.file("report.json"), eval_report_json(report).dump(2) + "\n");
  const std::string text = eval_report_text(report);
  write_text(guard.file("report.txt"), text);
  std::fputs(text.c_str(), stdout);
  write_run_manifest(guard, c, "eval", {{"integration_mode", a.mode}, {"dataset", dataset_entry(root, ids)}}, inputs);
  guard.commit();
  return 0;
}

int cmd_plot_data(const Common& c, const EvalArgs& a) {
  if (a.predictions.empty()) throw UsageError("--predictions is required");
  const IntegrationMode mode = parse_integration_mode(a.mode);
  const fs::path root = data_root(c);
  const auto ids = sequence_ids(c, "test");
  const auto manifest = DatasetManifest::load(root);
  OutputGuard guard(c.out);
  std::vector<fs::path> inputs;
  for (const auto& id : ids) {
    const PreprocessedSequence seq(root, manifest.sequence(id), manifest.options);
    const fs::path file = predictions_file(a.predictions, id);
    inputs.push_back(file);
    const auto pred = read_pose_csv(file);
    const auto& gt = seq.labels();
    if (pred.size() != gt.size()) throw std::runtime_error("sequence " + id + ": prediction count mismatch");
    const auto traj = integrate(pred, mode);
    std::string overlay = "frame,gt_x,gt_y,pred_x,pred_y\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto g = project_to_2d(seq.poses()[0].inverse() * seq.poses()[i]);
      overlay += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, g.x, g.y, traj[i].x, traj[i].y);
    }
    write_text(guard.file(fs::path(id) / "trajectories.csv"), overlay);
    std::string per = "pair,gt_delta_d,pred_delta_d,gt_delta_theta,pred_delta_theta\n";
    for (std::size_t i = 0; i < gt.size(); ++i)
      per += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, gt[i].delta_d, pred[i].delta_d, gt[i].delta_theta,
                         pred[i].delta_theta);
    write_text(guard.file(fs::path(id) / "per_frame.csv"), per);
  }
  write_run_manifest(guard, c, "plot-data", {{"integration_mode", a.mode}, {"dataset", dataset_entry(root, ids)}},
                     inputs);
  guard.commit();
  return 0;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const std::string& manifest_path) {
  const auto j = nlohmann::json::parse(read_text(manifest_path));
  std::size_t bad = 0, checked = 0;
  for (const char* section : {"inputs", "outputs"}) {
    for (const auto& f : j.at(section)) {
      const fs::path p = f.at("path").get<std::string>();
      ++checked;
      if (p.filename() == "run_manifest.json") continue;
      if (!fs::exists(p)) {
        spdlog::error("missing: {}", p.string());
        ++bad;
      } else if (sha256_file(p) != f.at("sha256").get<std::string>()) {
        spdlog::error("hash mismatch: {}", p.string());
        ++bad;
      }
    }
  }
  if (bad) return 1;
  spdlog::info("{} files verified", checked);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Laser and camera CNN odometry: data preparation, training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  common.argv.assign(argv, argv + argc);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");
  app.add_option("--threads", common.threads, "OpenMP threads (0 keeps the runtime default)");

  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", common.data, std::string("Preprocessed dataset root (default: $") + kDataRootEnv + ")");
  };
  auto add_selection = [&](CLI::App* cmd) {
    cmd->add_option("--sequences", common.sequences, "Comma-separated sequence ids");
    cmd->add_option("--split", common.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  };
  auto add_out = [&](CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--out", common.out, "Output directory");
    if (required) o->required();
  };

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write procedurally generated sequences in the raw KITTI layout");
  c_synth->add_option("--sequences", common.sequences, "Comma-separated ids to generate (default 00)");
  c_synth->add_option("--frames", synth.frames, "Frames per sequence")->check(CLI::Range(2, 1000000));
  c_synth->add_option("--seed", synth.seed, "Generator seed");
  c_synth->add_option("--image-width", synth.image_width);
  c_synth->add_option("--image-height", synth.image_height);
  add_out(c_synth, true);

  IngestArgs ingest_args;
  auto* c_ingest = app.add_subcommand("ingest", "Preprocess raw sequences into the binary dataset");
  c_ingest->add_option("--raw", ingest_args.raw, "Raw KITTI odometry root")->required();
  add_selection(c_ingest);
  c_ingest->add_option("--out", common.out, std::string("Dataset output root (default: $") + kDataRootEnv + ")");
  c_ingest->add_option("--max-range", ingest_args.options.max_range, "Range normalization in meters");
  c_ingest->add_option("--band", ingest_args.options.elevation_band_deg, "Elevation band in degrees");
  c_ingest->add_option("--image-width", ingest_args.options.image_width);
  c_ingest->add_option("--image-height", ingest_args.options.image_height);

  TrainArgs train_args;
  std::string sensor;
  auto add_train_options = [&](CLI::App* cmd) {
    add_data(cmd);
    add_selection(cmd);
    add_out(cmd, true);
    cmd->add_option("--config", train_args.config_file, "key = value training config; flags override it");
    cmd->add_option("--model", train_args.model, "Model preset: paper, compact or tiny")
        ->check(CLI::IsMember({"paper", "compact", "tiny"}));
    cmd->add_option("--seed", train_args.seed);
    cmd->add_option("--beta", train_args.beta, "Rotation loss weight (> 0)");
    cmd->add_option("--lr", train_args.lr, "Adam learning rate");
    cmd->add_option("--batch", train_args.batch);
    cmd->add_option("--epochs", train_args.epochs);
    cmd->add_option("--max-steps", train_args.max_steps, "Stop after this many optimizer steps in total");
    cmd->add_option("--resume", train_args.resume, "Continue from a state.ckpt");
    cmd->add_option("--log-every", train_args.log_every, "Log every N steps (0 disables)");
  };
  auto* c_pretrain = app.add_subcommand("pretrain", "Pretrain one single-sensor CNN");
  c_pretrain->add_option("--sensor", sensor, "laser or cam")->required()->check(CLI::IsMember({"laser", "cam"}));
  add_train_options(c_pretrain);
  auto* c_train = app.add_subcommand("train", "Run one training stage");
  c_train->add_option("--stage", train_args.stage, "pretrain-laser, pretrain-cam or fusion")
      ->required()
      ->check(CLI::IsMember({"pretrain-laser", "pretrain-cam", "fusion"}));
  c_train->add_option("--laser-ckpt", train_args.laser_ckpt, "Pretrained laser CNN (fusion)");
  c_train->add_option("--cam-ckpt", train_args.cam_ckpt, "Pretrained camera CNN (fusion)");
  add_train_options(c_train);

  EvalArgs eval_args;
  auto* c_infer = app.add_subcommand("infer", "Predict relative poses for every pair");
  c_infer->add_option("--checkpoint", eval_args.checkpoint, "Fused model checkpoint")->required();
  add_data(c_infer);
  add_selection(c_infer);
  add_out(c_infer, true);

  auto* c_eval = app.add_subcommand("eval", "Score predictions: drift, absolute errors, latency");
  c_eval->add_option("--checkpoint", eval_args.checkpoint, "Fused model checkpoint (runs inference)");
  c_eval->add_option("--predictions", eval_args.predictions,
                     "Directory with <seq>/predictions.csv (or <seq>/labels.csv)");
  c_eval->add_option("--mode", eval_args.mode, "Pose integration")
      ->check(CLI::IsMember({"paper-verbatim", "heading-integrated"}));
  add_data(c_eval);
  add_selection(c_eval);
  add_out(c_eval, true);

  auto* c_plot = app.add_subcommand("plot-data", "Write trajectory overlays and per-frame comparison CSVs");
  c_plot->add_option("--predictions", eval_args.predictions, "Directory with <seq>/predictions.csv")->required();
  c_plot->add_option("--mode", eval_args.mode, "Pose integration")
      ->check(CLI::IsMember({"paper-verbatim", "heading-integrated"}));
  add_data(c_plot);
  add_selection(c_plot);
  add_out(c_plot, true);

  std::string manifest_path;
  auto* c_verify = app.add_subcommand("verify", "Check the hashes recorded in a run_manifest.json");
  c_verify->add_option("manifest", manifest_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto logger = spdlog::stderr_color_mt("lcodom");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  if (common.threads > 0) omp_set_num_threads(common.threads);

  try {
    if (*c_synth) return cmd_synth(common, synth);
    if (*c_ingest) return cmd_ingest(common, ingest_args);
    if (*c_pretrain) {
      train_args.stage = sensor == "laser" ? "pretrain-laser" : "pretrain-cam";
      return cmd_train(common, train_args);
    }
    if (*c_train) return cmd_train(common, train_args);
    if (*c_infer) return cmd_infer(common, eval_args);
    if (*c_eval) return cmd_eval(common, eval_args);
    if (*c_plot) return cmd_plot_data(common, eval_args);
    if (*c_verify) return cmd_verify(manifest_path);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}

}  // namespace lcodom::cli

int main(int argc, char** argv) {
  lcodom::retain_freed_memory();
  return lcodom::cli::run(argc, argv);
}
