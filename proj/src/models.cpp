#include "lcodom/models.hpp"

#include <stdexcept>

namespace lcodom {

LayerSpec LayerSpec::conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  return {LayerKind::kConv1d, in, out, kernel, stride, padding};
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  return {LayerKind::kConv2d, in, out, kernel, stride, padding};
}

LayerSpec LayerSpec::avg_pool1d(std::size_t window, std::size_t stride) {
  return {LayerKind::kAvgPool1d, 0, 0, window, stride};
}

LayerSpec LayerSpec::avg_pool2d(std::size_t window, std::size_t stride) {
  return {LayerKind::kAvgPool2d, 0, 0, window, stride};
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) { return {LayerKind::kLinear, in, out}; }

LayerSpec LayerSpec::dropout(double p) {
  LayerSpec s{LayerKind::kDropout};
  s.p = p;
  return s;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::kConv1d: return {out, in, kernel};
    case LayerKind::kConv2d: return {out, in, kernel, kernel};
    case LayerKind::kLinear: return {out, in};
    default: return {};
  }
}

std::size_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::kConv1d: return in * kernel;
    case LayerKind::kConv2d: return in * kernel * kernel;
    case LayerKind::kLinear: return in;
    default: return 0;
  }
}

void LayerSpec::validate() const {
  if (kernel < 1) throw std::invalid_argument("layer kernel size must be >= 1");
  if (stride < 1) throw std::invalid_argument("layer stride must be >= 1");
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout p must be in [0, 1)");
  if (has_params() && (in == 0 || out == 0)) throw std::invalid_argument("layer widths must be positive");
}

Shape LayerSpec::output_shape(const Shape& x) const {
  auto conv_len = [&](std::size_t n, const char* axis) {
    if (n + 2 * padding < kernel) {
      throw ShapeError(std::string("input ") + axis + " " + std::to_string(n) + " is shorter than kernel " +
                       std::to_string(kernel));
    }
    return (n + 2 * padding - kernel) / stride + 1;
  };
  auto pool_len = [&](std::size_t n, const char* axis) {
    if (n < kernel) throw ShapeError(std::string("input ") + axis + " " + std::to_string(n) + " is shorter than pool window");
    return (n - kernel) / stride + 1;
  };
  switch (kind) {
    case LayerKind::kConv1d:
      if (x.size() != 2 || x[0] != in) throw ShapeError("conv1d expects [" + std::to_string(in) + ", L], got " + to_string(x));
      return {out, conv_len(x[1], "length")};
    case LayerKind::kConv2d:
      if (x.size() != 3 || x[0] != in) throw ShapeError("conv2d expects [" + std::to_string(in) + ", H, W], got " + to_string(x));
      return {out, conv_len(x[1], "height"), conv_len(x[2], "width")};
    case LayerKind::kAvgPool1d:
      if (x.size() != 2) throw ShapeError("avg_pool1d expects [C, L], got " + to_string(x));
      return {x[0], pool_len(x[1], "length")};
    case LayerKind::kAvgPool2d:
      if (x.size() != 3) throw ShapeError("avg_pool2d expects [C, H, W], got " + to_string(x));
      return {x[0], pool_len(x[1], "height"), pool_len(x[2], "width")};
    case LayerKind::kLinear:
      if (numel(x) != in) throw ShapeError("linear expects " + std::to_string(in) + " inputs, got " + to_string(x));
      return {out};
    default: return x;
  }
}

Shape output_shape(std::span<const LayerSpec> layers, Shape input) {
  for (const auto& l : layers) input = l.output_shape(input);
  return input;
}

template <typename T>
void register_layers(std::span<const LayerSpec> layers, std::string_view prefix, ParamStore<T>& store) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    l.validate();
    if (!l.has_params()) continue;
    const std::string base = std::string(prefix) + "." + std::to_string(i);
    store.add(base + ".weight", l.weight_shape(), Init::kHeUniform, l.fan_in());
    store.add(base + ".bias", {l.out}, Init::kZeros);
  }
}

template <typename T>
Var<T> run_layers(std::span<const LayerSpec> layers, std::string_view prefix, ParamStore<T>& store, Tape<T>& tape,
                  Var<T> x, const ForwardContext& ctx) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string base = std::string(prefix) + "." + std::to_string(i);
    auto w = [&] { return tape.parameter(store, base + ".weight"); };
    auto b = [&] { return tape.parameter(store, base + ".bias"); };
    switch (l.kind) {
      case LayerKind::kConv1d: x = conv1d(x, w(), b(), l.stride, l.padding); break;
      case LayerKind::kConv2d: x = conv2d(x, w(), b(), l.stride, l.padding); break;
      case LayerKind::kAvgPool1d: x = avg_pool(x, l.kernel, l.stride, 1); break;
      case LayerKind::kAvgPool2d: x = avg_pool(x, l.kernel, l.stride, 2); break;
      case LayerKind::kLinear: x = linear(x, w(), b()); break;
      case LayerKind::kRelu: x = relu(x); break;
      case LayerKind::kSigmoid: x = sigmoid(x); break;
      case LayerKind::kDropout:
        if (ctx.mode == Mode::kTrain && l.p > 0.0) {
          if (!ctx.rng) throw std::invalid_argument("train-mode dropout needs an RNG");
          x = dropout(x, l.p, ctx.mode, *ctx.rng);
        }
        break;
    }
  }
  return x;
}

std::vector<LayerSpec> LaserNetConfig::layers() const {
  validate();
  std::vector<LayerSpec> out;
  std::size_t in = 2;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    out.push_back(LayerSpec::conv1d(in, channels[i], kernels[i], 1, kernels[i] / 2));
    out.push_back(LayerSpec::relu());
    if (i % 2 == 1) out.push_back(LayerSpec::avg_pool1d(pool, pool));
    in = channels[i];
  }
  const Shape flat = output_shape(out, input_shape());
  out.push_back(LayerSpec::linear(numel(flat), features));
  return out;
}

void LaserNetConfig::validate() const {
  if (channels.size() != 6 || kernels.size() != 6) throw std::invalid_argument("laser net needs exactly 6 conv layers");
  for (std::size_t k : kernels)
    if (k % 2 == 0) throw std::invalid_argument("laser kernels must be odd for same padding");
  if (features == 0 || pool == 0 || input_length == 0) throw std::invalid_argument("laser net sizes must be positive");
}

std::vector<LayerSpec> CamNetConfig::layers() const {
  validate();
  std::vector<LayerSpec> out;
  std::size_t in = 6;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    out.push_back(LayerSpec::conv2d(in, channels[i], kernels[i], strides[i], kernels[i] / 2));
    out.push_back(LayerSpec::relu());
    in = channels[i];
  }
  const Shape flat = output_shape(out, input_shape());
  out.push_back(LayerSpec::linear(numel(flat), features));
  return out;
}

void CamNetConfig::validate() const {
  if (channels.size() != 9 || kernels.size() != 9 || strides.size() != 9) {
    throw std::invalid_argument("camera net needs exactly 9 conv layers");
  }
  if (features == 0 || height == 0 || width == 0) throw std::invalid_argument("camera net sizes must be positive");
}

ModelConfig ModelConfig::paper() { return {}; }

ModelConfig ModelConfig::compact() {
  ModelConfig c;
  c.laser.channels = {8, 8, 16, 16, 32, 32};
  c.laser.features = 32;
  c.cam.channels = {8, 16, 16, 16, 32, 32, 32, 32, 64};
  c.cam.features = 32;
  c.head.hidden = 64;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.laser.input_length = 64;
  c.laser.channels = {2, 3, 3, 3, 4, 4};
  c.laser.features = 6;
  c.cam.height = 16;
  c.cam.width = 32;
  c.cam.channels = {2, 3, 3, 3, 3, 3, 4, 4, 4};
  c.cam.features = 6;
  c.head.hidden = 5;
  return c;
}

void ModelConfig::validate() const {
  laser.validate();
  cam.validate();
  rotation_grid.validate();
  translation_grid.validate();
  if (laser.features != cam.features) throw std::invalid_argument("laser and camera feature widths must match");
  if (!(head.dropout >= 0.0 && head.dropout < 1.0)) throw std::invalid_argument("head dropout must be in [0, 1)");
  if (head.hidden == 0) throw std::invalid_argument("head hidden width must be positive");
  (void)laser.layers();
  (void)cam.layers();
}

template <typename T>
RankTargets<T> rank_targets(const RelativePose& pose, const ModelConfig& config) {
  auto to_tensor = [](const std::vector<float>& v) { return Tensor<T>({v.size()}, std::vector<T>(v.begin(), v.end())); };
  const auto& rg = config.rotation_grid;
  const auto& tg = config.translation_grid;
  return {to_tensor(encode_rank(class_of(pose.delta_theta, rg, &label_clamp_counter()), rg.k)),
          to_tensor(encode_rank(class_of(pose.delta_d, tg, &label_clamp_counter()), tg.k))};
}

template <typename T>
Var<T> odometry_loss(const HeadOutputs<T>& out, const RankTargets<T>& targets, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  auto trans = bce_sum(out.translation, targets.translation);
  if (beta == 0.0) return trans;
  return add(trans, scale(bce_sum(out.rotation, targets.rotation), static_cast<T>(beta)));
}

template <typename T>
OdometryNet<T>::OdometryNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  laser_ = config_.laser.layers();
  cam_ = config_.cam.layers();
  const std::size_t fused = config_.laser.features + config_.cam.features;
  auto head = [&](std::size_t k) {
    return std::vector<LayerSpec>{LayerSpec::dropout(config_.head.dropout), LayerSpec::linear(fused, config_.head.hidden),
                                  LayerSpec::relu(), LayerSpec::linear(config_.head.hidden, k - 1), LayerSpec::sigmoid()};
  };
  rot_head_ = head(config_.rotation_grid.k);
  trans_head_ = head(config_.translation_grid.k);
  pre_rot_ = {LayerSpec::linear(config_.laser.features, config_.rotation_grid.k - 1), LayerSpec::sigmoid()};
  pre_trans_ = {LayerSpec::linear(config_.laser.features, config_.translation_grid.k - 1), LayerSpec::sigmoid()};
}

template <typename T>
void OdometryNet<T>::register_laser(ParamStore<T>& store) const {
  register_layers<T>(laser_, "laser", store);
}

template <typename T>
void OdometryNet<T>::register_cam(ParamStore<T>& store) const {
  register_layers<T>(cam_, "cam", store);
}

template <typename T>
void OdometryNet<T>::register_fusion_heads(ParamStore<T>& store) const {
  register_layers<T>(rot_head_, "head.rot", store);
  register_layers<T>(trans_head_, "head.trans", store);
}

template <typename T>
void OdometryNet<T>::register_pretrain_heads(ParamStore<T>& store) const {
  register_layers<T>(pre_rot_, "pretrain.rot", store);
  register_layers<T>(pre_trans_, "pretrain.trans", store);
}

template <typename T>
void OdometryNet<T>::register_sensor(Sensor sensor, ParamStore<T>& store) const {
  sensor == Sensor::kLaser ? register_laser(store) : register_cam(store);
}

template <typename T>
Var<T> OdometryNet<T>::cnn_laser_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> scans,
                                         const ForwardContext& ctx) const {
  if (scans.shape() != config_.laser.input_shape()) {
    throw ShapeError("laser input must be " + to_string(config_.laser.input_shape()) + ", got " + to_string(scans.shape()));
  }
  return run_layers<T>(laser_, "laser", store, tape, scans, ctx);
}

template <typename T>
Var<T> OdometryNet<T>::cnn_cam_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> images,
                                       const ForwardContext& ctx) const {
  if (images.shape() != config_.cam.input_shape()) {
    throw ShapeError("camera input must be " + to_string(config_.cam.input_shape()) + ", got " + to_string(images.shape()));
  }
  return run_layers<T>(cam_, "cam", store, tape, images, ctx);
}

template <typename T>
Var<T> OdometryNet<T>::sensor_forward(Sensor sensor, Tape<T>& tape, ParamStore<T>& store, Var<T> input,
                                      const ForwardContext& ctx) const {
  return sensor == Sensor::kLaser ? cnn_laser_forward(tape, store, input, ctx) : cnn_cam_forward(tape, store, input, ctx);
}

template <typename T>
HeadOutputs<T> OdometryNet<T>::fusion_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> laser_feat, Var<T> cam_feat,
                                              const ForwardContext& ctx) const {
  if (laser_feat.value().size() != cam_feat.value().size()) {
    throw ShapeError("fusion needs equal feature widths, got " + to_string(laser_feat.shape()) + " and " +
                     to_string(cam_feat.shape()));
  }
  const std::vector<Var<T>> parts{laser_feat, cam_feat};
  const Var<T> fused = concat<T>(parts);
  return {run_layers<T>(rot_head_, "head.rot", store, tape, fused, ctx),
          run_layers<T>(trans_head_, "head.trans", store, tape, fused, ctx)};
}

template <typename T>
HeadOutputs<T> OdometryNet<T>::pretrain_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> feat,
                                                const ForwardContext& ctx) const {
  return {run_layers<T>(pre_rot_, "pretrain.rot", store, tape, feat, ctx),
          run_layers<T>(pre_trans_, "pretrain.trans", store, tape, feat, ctx)};
}

std::string_view sensor_name(Sensor sensor) { return sensor == Sensor::kLaser ? "laser" : "camera"; }
std::string_view sensor_prefix(Sensor sensor) { return sensor == Sensor::kLaser ? "laser" : "cam"; }

#define LCODOM_INSTANTIATE_MODELS(T)                                                                          \
  template void register_layers<T>(std::span<const LayerSpec>, std::string_view, ParamStore<T>&);             \
  template Var<T> run_layers<T>(std::span<const LayerSpec>, std::string_view, ParamStore<T>&, Tape<T>&, Var<T>, \
                                const ForwardContext&);                                                       \
  template RankTargets<T> rank_targets<T>(const RelativePose&, const ModelConfig&);                           \
  template Var<T> odometry_loss<T>(const HeadOutputs<T>&, const RankTargets<T>&, double);                     \
  template class OdometryNet<T>;

LCODOM_INSTANTIATE_MODELS(float)
LCODOM_INSTANTIATE_MODELS(double)

}  // namespace lcodom
