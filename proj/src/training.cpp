#include "lcodom/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lcodom {
namespace {

constexpr std::uint64_t kShuffleTag = 0x5348'5546'464cULL;
constexpr std::uint64_t kDropoutTag = 0x4452'4f50'4f55ULL;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad number for " + key + ": '" + text + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad integer for " + key + ": '" + text + "'");
  return v;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

ModelConfig preset(const std::string& name) {
  if (name == "paper") return ModelConfig::paper();
  if (name == "compact") return ModelConfig::compact();
  if (name == "tiny") return ModelConfig::tiny();
  throw std::invalid_argument("config: unknown model preset '" + name + "'");
}

TrainConfig config_from_map(std::map<std::string, std::string> kv) {
  TrainConfig c;
  if (auto it = kv.find("model"); it != kv.end()) {
    c.model = preset(it->second);
    kv.erase(it);
  }
  auto grid = [](ClassGrid& g, const std::string& key, const std::string& field, const std::string& value) {
    if (field == "min") g.min_value = parse_double(key, value);
    else if (field == "resolution") g.resolution = parse_double(key, value);
    else if (field == "classes") g.k = parse_uint(key, value);
    else return false;
    return true;
  };
  for (const auto& [key, value] : kv) {
    auto& m = c.model;
    if (key == "stage") c.stage = parse_stage(value);
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "beta") c.beta = parse_double(key, value);
    else if (key == "batch") c.batch = parse_uint(key, value);
    else if (key == "epochs") c.epochs = parse_uint(key, value);
    else if (key == "max_steps") c.max_steps = parse_uint(key, value);
    else if (key == "seed") c.seed = parse_uint(key, value);
    else if (key == "adam.beta1") c.adam.beta1 = parse_double(key, value);
    else if (key == "adam.beta2") c.adam.beta2 = parse_double(key, value);
    else if (key == "adam.epsilon") c.adam.epsilon = parse_double(key, value);
    else if (key == "laser.input_length") m.laser.input_length = parse_uint(key, value);
    else if (key == "laser.channels") m.laser.channels = parse_list(key, value);
    else if (key == "laser.kernels") m.laser.kernels = parse_list(key, value);
    else if (key == "laser.pool") m.laser.pool = parse_uint(key, value);
    else if (key == "laser.features") m.laser.features = parse_uint(key, value);
    else if (key == "cam.height") m.cam.height = parse_uint(key, value);
    else if (key == "cam.width") m.cam.width = parse_uint(key, value);
    else if (key == "cam.channels") m.cam.channels = parse_list(key, value);
    else if (key == "cam.kernels") m.cam.kernels = parse_list(key, value);
    else if (key == "cam.strides") m.cam.strides = parse_list(key, value);
    else if (key == "cam.features") m.cam.features = parse_uint(key, value);
    else if (key == "head.dropout") m.head.dropout = parse_double(key, value);
    else if (key == "head.hidden") m.head.hidden = parse_uint(key, value);
    else if (key.starts_with("grid.rotation.") && grid(m.rotation_grid, key, key.substr(14), value)) {
    } else if (key.starts_with("grid.translation.") && grid(m.translation_grid, key, key.substr(17), value)) {
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  if (!kv.count("epochs")) c.epochs = TrainConfig::default_epochs(c.stage);
  c.validate();
  return c;
}

std::string make_metadata(std::string_view kind, const TrainConfig& config, std::string_view sensor = {}) {
  std::string out = "kind = " + std::string(kind) + "\n";
  if (!sensor.empty()) out += "sensor = " + std::string(sensor) + "\n";
  return out + config.to_text();
}

bool has_prefix(const std::string& name, std::string_view prefix) {
  return name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 && name[prefix.size()] == '.';
}

// Copies every parameter under `prefix` from src into dst; both sides must agree exactly.
void load_prefix(ParamStore<float>& dst, const ParamStore<float>& src, std::string_view prefix, std::string_view what) {
  std::size_t expected = 0;
  for (auto& p : dst) {
    if (!has_prefix(p.name, prefix)) continue;
    ++expected;
    if (!src.contains(p.name))
      throw CheckpointError(std::string(what) + " checkpoint lacks parameter " + p.name);
    const auto& s = src.at(p.name);
    if (s.value.shape() != p.value.shape())
      throw CheckpointError(std::string(what) + " checkpoint parameter " + p.name + " has shape " +
                            to_string(s.value.shape()) + ", expected " + to_string(p.value.shape()));
    p.value = s.value;
  }
  std::size_t found = 0;
  for (const auto& p : src)
    if (has_prefix(p.name, prefix)) ++found;
  if (found != expected)
    throw CheckpointError(std::string(what) + " checkpoint has " + std::to_string(found) + " " + std::string(prefix) +
                          " parameters, expected " + std::to_string(expected));
}

void restore_state(ParamStore<float>& store, Adam<float>& adam, const Checkpoint& resume) {
  if (!resume.optimizer) throw CheckpointError("resume checkpoint has no optimizer state");
  if (resume.params.size() != store.size())
    throw CheckpointError("resume checkpoint has " + std::to_string(resume.params.size()) + " parameters, expected " +
                          std::to_string(store.size()));
  for (auto& p : store) {
    if (!resume.params.contains(p.name)) throw CheckpointError("resume checkpoint lacks parameter " + p.name);
    const auto& s = resume.params.at(p.name);
    if (s.value.shape() != p.value.shape()) throw CheckpointError("resume checkpoint shape mismatch for " + p.name);
    p.value = s.value;
  }
  if (resume.optimizer->m.empty()) {
    adam.restore(resume.optimizer->step, {}, {});
    return;
  }
  // Moments are stored in checkpoint order; reorder to the store's order.
  std::vector<Tensor32> m(store.size()), v(store.size());
  for (std::size_t i = 0; i < resume.params.size(); ++i) {
    const std::size_t j = store.index_of(resume.params[i].name);
    m[j] = resume.optimizer->m.at(i);
    v[j] = resume.optimizer->v.at(i);
  }
  adam.restore(resume.optimizer->step, std::move(m), std::move(v));
}

std::size_t total_steps(const TrainConfig& config, std::size_t n) {
  const std::size_t per_epoch = (n + config.batch - 1) / config.batch;
  std::size_t steps = per_epoch * config.epochs;
  if (config.max_steps) steps = std::min(steps, config.max_steps);
  return steps;
}

// Shared training loop; `loss_for` builds the loss of pair i on the tape.
template <typename LossFn>
std::vector<LossRecord> run_loop(ParamStore<float>& store, Adam<float>& adam, const PairDataset& data,
                                 const TrainConfig& config, const StepCallback& on_step, LossFn&& loss_for) {
  const std::size_t n = data.size();
  const std::size_t per_epoch = (n + config.batch - 1) / config.batch;
  const std::size_t end = total_steps(config, n);
  std::vector<LossRecord> trace;
  for (std::size_t step = adam.step_count(); step < end; ++step) {
    const auto batch = batch_indices(n, config.batch, config.seed, step);
    Rng rng(mix_seed(mix_seed(config.seed, kDropoutTag), step));
    const ForwardContext ctx{Mode::kTrain, &rng};
    Tape<float> tape;
    Var<float> total;
    for (const std::size_t i : batch) {
      Var<float> l = loss_for(tape, i, ctx);
      total = total.valid() ? add(total, l) : l;
    }
    Var<float> loss = scale(total, 1.0f / static_cast<float>(batch.size()));
    tape.backward(loss);
    adam.step(store);
    LossRecord rec{step, step / per_epoch, static_cast<double>(loss.value()[0])};
    trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return trace;
}

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kPretrainLaser: return "pretrain-laser";
    case Stage::kPretrainCam: return "pretrain-cam";
    case Stage::kFusion: return "fusion";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "pretrain-laser") return Stage::kPretrainLaser;
  if (name == "pretrain-cam") return Stage::kPretrainCam;
  if (name == "fusion") return Stage::kFusion;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("config: lr must be positive");
  if (!(beta > 0) || !std::isfinite(beta)) throw std::invalid_argument("config: beta must be positive");
  if (batch == 0) throw std::invalid_argument("config: batch must be at least 1");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.epsilon > 0))
    throw std::invalid_argument("config: bad Adam coefficients");
  model.validate();
}

std::string TrainConfig::to_text() const {
  const auto& m = model;
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) {
    out += std::string(key) + " = " + value + "\n";
  };
  line("stage", std::string(stage_name(stage)));
  line("lr", format_double(lr));
  line("beta", format_double(beta));
  line("batch", std::to_string(batch));
  line("epochs", std::to_string(epochs));
  line("max_steps", std::to_string(max_steps));
  line("seed", std::to_string(seed));
  line("adam.beta1", format_double(adam.beta1));
  line("adam.beta2", format_double(adam.beta2));
  line("adam.epsilon", format_double(adam.epsilon));
  line("laser.input_length", std::to_string(m.laser.input_length));
  line("laser.channels", format_list(m.laser.channels));
  line("laser.kernels", format_list(m.laser.kernels));
  line("laser.pool", std::to_string(m.laser.pool));
  line("laser.features", std::to_string(m.laser.features));
  line("cam.height", std::to_string(m.cam.height));
  line("cam.width", std::to_string(m.cam.width));
  line("cam.channels", format_list(m.cam.channels));
  line("cam.kernels", format_list(m.cam.kernels));
  line("cam.strides", format_list(m.cam.strides));
  line("cam.features", std::to_string(m.cam.features));
  line("head.dropout", format_double(m.head.dropout));
  line("head.hidden", std::to_string(m.head.hidden));
  line("grid.rotation.min", format_double(m.rotation_grid.min_value));
  line("grid.rotation.resolution", format_double(m.rotation_grid.resolution));
  line("grid.rotation.classes", std::to_string(m.rotation_grid.k));
  line("grid.translation.min", format_double(m.translation_grid.min_value));
  line("grid.translation.resolution", format_double(m.translation_grid.resolution));
  line("grid.translation.classes", std::to_string(m.translation_grid.k));
  return out;
}

TrainConfig TrainConfig::from_text(std::string_view text) { return config_from_map(parse_key_values(text)); }

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return out;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch, std::uint64_t seed,
                                       std::size_t step) {
  if (dataset_size == 0 || batch == 0) throw std::invalid_argument("batch_indices: empty dataset or batch");
  const std::size_t per_epoch = (dataset_size + batch - 1) / batch;
  const std::size_t epoch = step / per_epoch;
  const std::size_t within = step % per_epoch;
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(seed, kShuffleTag), epoch));
  for (std::size_t i = dataset_size - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const std::size_t first = within * batch;
  const std::size_t last = std::min(dataset_size, first + batch);
  return {order.begin() + static_cast<std::ptrdiff_t>(first), order.begin() + static_cast<std::ptrdiff_t>(last)};
}

TrainResult pretrain_single(Sensor sensor, const PairDataset& data, const TrainConfig& config, const Checkpoint* resume,
                            const StepCallback& on_step) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("pretraining needs at least one pair");
  const Stage expected = sensor == Sensor::kLaser ? Stage::kPretrainLaser : Stage::kPretrainCam;
  TrainConfig cfg = config;
  cfg.stage = expected;

  OdometryNet<float> net(cfg.model);
  ParamStore<float> store(cfg.seed);
  net.register_sensor(sensor, store);
  net.register_pretrain_heads(store);
  AdamOptions opts = cfg.adam;
  opts.lr = cfg.lr;
  Adam<float> adam(opts);
  if (resume) restore_state(store, adam, *resume);

  auto losses = run_loop(store, adam, data, cfg, on_step, [&](Tape<float>& tape, std::size_t i, const ForwardContext& ctx) {
    Var<float> x = tape.constant(sensor == Sensor::kLaser ? data.laser_input(i) : data.camera_input(i));
    Var<float> feat = net.sensor_forward(sensor, tape, store, x, ctx);
    const auto out = net.pretrain_forward(tape, store, feat, ctx);
    return odometry_loss(out, rank_targets<float>(data.label(i), cfg.model), cfg.beta);
  });

  Checkpoint state{make_metadata("training-state", cfg, sensor_name(sensor)), std::move(store), snapshot(adam)};
  return {std::move(state), std::move(losses)};
}

TrainResult train_fusion(const PairDataset& data, const Checkpoint& laser, const Checkpoint& cam,
                         const TrainConfig& config, const Checkpoint* resume, const StepCallback& on_step) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("fusion training needs at least one pair");
  TrainConfig cfg = config;
  cfg.stage = Stage::kFusion;

  OdometryNet<float> net(cfg.model);
  ParamStore<float> store(cfg.seed);
  net.register_laser(store);
  net.register_cam(store);
  net.register_fusion_heads(store);
  load_prefix(store, laser.params, sensor_prefix(Sensor::kLaser), "laser");
  load_prefix(store, cam.params, sensor_prefix(Sensor::kCamera), "camera");
  AdamOptions opts = cfg.adam;
  opts.lr = cfg.lr;
  Adam<float> adam(opts);
  if (resume) restore_state(store, adam, *resume);

  auto losses = run_loop(store, adam, data, cfg, on_step, [&](Tape<float>& tape, std::size_t i, const ForwardContext& ctx) {
    Var<float> fl = net.cnn_laser_forward(tape, store, tape.constant(data.laser_input(i)), ctx);
    Var<float> fc = net.cnn_cam_forward(tape, store, tape.constant(data.camera_input(i)), ctx);
    const auto out = net.fusion_forward(tape, store, fl, fc, ctx);
    return odometry_loss(out, rank_targets<float>(data.label(i), cfg.model), cfg.beta);
  });

  Checkpoint state{make_metadata("training-state", cfg), std::move(store), snapshot(adam)};
  return {std::move(state), std::move(losses)};
}

Checkpoint export_weights(const Checkpoint& state, const std::vector<std::string>& prefixes, std::string kind) {
  auto kv = parse_key_values(state.metadata);
  const std::string sensor = kv.count("sensor") ? kv.at("sensor") : std::string();
  Checkpoint out{make_metadata(kind, config_of(state), sensor), ParamStore<float>(state.params.seed()), std::nullopt};
  for (const auto& p : state.params) {
    const bool keep = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& pre) { return has_prefix(p.name, pre); });
    if (keep) out.params.add(p.name, p.value);
  }
  return out;
}

std::string metadata_value(const Checkpoint& ckpt, std::string_view key) {
  const auto kv = parse_key_values(ckpt.metadata);
  const auto it = kv.find(std::string(key));
  return it == kv.end() ? std::string() : it->second;
}

TrainConfig config_of(const Checkpoint& ckpt) {
  auto kv = parse_key_values(ckpt.metadata);
  kv.erase("kind");
  kv.erase("sensor");
  return config_from_map(std::move(kv));
}

double dataset_loss(const OdometryNet<float>& net, ParamStore<float>& params, const PairDataset& data, Stage stage,
                    double beta) {
  if (data.size() == 0) throw std::invalid_argument("dataset_loss: empty dataset");
  const ForwardContext ctx{Mode::kEval, nullptr};
  double total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape<float> tape(GradMode::kInference);
    HeadOutputs<float> out;
    if (stage == Stage::kFusion) {
      Var<float> fl = net.cnn_laser_forward(tape, params, tape.constant(data.laser_input(i)), ctx);
      Var<float> fc = net.cnn_cam_forward(tape, params, tape.constant(data.camera_input(i)), ctx);
      out = net.fusion_forward(tape, params, fl, fc, ctx);
    } else {
      const Sensor s = stage == Stage::kPretrainLaser ? Sensor::kLaser : Sensor::kCamera;
      Var<float> x = tape.constant(s == Sensor::kLaser ? data.laser_input(i) : data.camera_input(i));
      out = net.pretrain_forward(tape, params, net.sensor_forward(s, tape, params, x, ctx), ctx);
    }
    const auto targets = rank_targets<float>(data.label(i), net.config());
    total += bce_sum_value<float>(out.translation.value().span(), targets.translation.span()) +
             beta * bce_sum_value<float>(out.rotation.value().span(), targets.rotation.span());
  }
  return total / static_cast<double>(data.size());
}

Prediction decode_outputs(std::span<const float> rotation, std::span<const float> translation, const ModelConfig& config) {
  Prediction p;
  p.rotation_class = decode_rank(rotation, config.rotation_grid.k);
  p.translation_class = decode_rank(translation, config.translation_grid.k);
  p.pose.delta_theta = value_of(p.rotation_class, config.rotation_grid);
  p.pose.delta_d = value_of(p.translation_class, config.translation_grid);
  return p;
}

Prediction infer(const OdometryNet<float>& net, ParamStore<float>& params, const Tensor32& scans,
                 const Tensor32& images) {
  const ForwardContext ctx{Mode::kEval, nullptr};
  Tape<float> tape(GradMode::kInference);
  Var<float> fl = net.cnn_laser_forward(tape, params, tape.constant(scans), ctx);
  Var<float> fc = net.cnn_cam_forward(tape, params, tape.constant(images), ctx);
  const auto out = net.fusion_forward(tape, params, fl, fc, ctx);
  return decode_outputs(out.rotation.value().span(), out.translation.value().span(), net.config());
}

}  // namespace lcodom
