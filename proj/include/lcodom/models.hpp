#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcodom/autograd.hpp"
#include "lcodom/ordinal.hpp"
#include "lcodom/params.hpp"
#include "lcodom/pose.hpp"

namespace lcodom {

enum class LayerKind { kConv1d, kConv2d, kAvgPool1d, kAvgPool2d, kLinear, kRelu, kSigmoid, kDropout };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in = 0;   // input channels, or input features for linear
  std::size_t out = 0;  // output channels, or output features for linear
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  double p = 0.0;

  static LayerSpec conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding);
  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding);
  static LayerSpec avg_pool1d(std::size_t window, std::size_t stride);
  static LayerSpec avg_pool2d(std::size_t window, std::size_t stride);
  static LayerSpec linear(std::size_t in, std::size_t out);
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid}; }
  static LayerSpec dropout(double p);

  bool has_params() const { return kind == LayerKind::kConv1d || kind == LayerKind::kConv2d || kind == LayerKind::kLinear; }
  Shape weight_shape() const;
  std::size_t fan_in() const;
  /// Throws std::invalid_argument on kernel/stride < 1, p outside [0, 1), zero widths.
  void validate() const;
  /// Shape produced from `input`; throws ShapeError if the layer cannot accept it.
  Shape output_shape(const Shape& input) const;
};

/// Registers "<prefix>.<index>.weight" / ".bias" for every parametrized layer.
template <typename T>
void register_layers(std::span<const LayerSpec> layers, std::string_view prefix, ParamStore<T>& store);

struct ForwardContext {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;  // required for dropout in train mode
};

template <typename T>
Var<T> run_layers(std::span<const LayerSpec> layers, std::string_view prefix, ParamStore<T>& store, Tape<T>& tape,
                  Var<T> x, const ForwardContext& ctx);

Shape output_shape(std::span<const LayerSpec> layers, Shape input);

/// Six conv1d+ReLU layers with an average pool after every second one,
/// then a linear reduction to `features`.
struct LaserNetConfig {
  std::size_t input_length = 3601;
  std::vector<std::size_t> channels{64, 64, 128, 128, 256, 256};
  std::vector<std::size_t> kernels{7, 3, 3, 3, 3, 3};
  std::size_t pool = 2;
  std::size_t features = 512;

  std::vector<LayerSpec> layers() const;
  Shape input_shape() const { return {2, input_length}; }
  void validate() const;
};

/// Nine conv2d+ReLU layers (contracting stack), then a linear reduction.
struct CamNetConfig {
  std::size_t height = 128;
  std::size_t width = 416;
  std::vector<std::size_t> channels{64, 128, 256, 256, 512, 512, 512, 512, 1024};
  std::vector<std::size_t> kernels{7, 5, 5, 3, 3, 3, 3, 3, 3};
  std::vector<std::size_t> strides{2, 2, 2, 1, 2, 1, 2, 1, 2};
  std::size_t features = 512;

  std::vector<LayerSpec> layers() const;
  Shape input_shape() const { return {6, height, width}; }
  void validate() const;
};

/// Per head: dropout -> linear(2F -> hidden) -> ReLU -> linear(hidden -> k-1) -> sigmoid.
struct FusionHeadConfig {
  double dropout = 0.5;
  std::size_t hidden = 512;
};

struct ModelConfig {
  LaserNetConfig laser;
  CamNetConfig cam;
  FusionHeadConfig head;
  ClassGrid rotation_grid = ClassGrid::rotation();
  ClassGrid translation_grid = ClassGrid::translation();

  /// The full-size network.
  static ModelConfig paper();
  /// Same topology and input sizes with narrow layers (desk-scale training).
  static ModelConfig compact();
  /// 2x64 scans and 6x16x32 images with tiny widths (gradient checks).
  static ModelConfig tiny();

  void validate() const;
};

enum class Sensor { kLaser, kCamera };

template <typename T>
struct HeadOutputs {
  Var<T> rotation;     // [k_rot - 1] probabilities
  Var<T> translation;  // [k_trans - 1] probabilities
};

template <typename T>
struct RankTargets {
  Tensor<T> rotation;
  Tensor<T> translation;
};

/// Rank labels for a relative pose; out-of-grid values clamp and count in label_clamp_counter().
template <typename T>
RankTargets<T> rank_targets(const RelativePose& pose, const ModelConfig& config);

/// bce_sum(translation) + beta * bce_sum(rotation).
template <typename T>
Var<T> odometry_loss(const HeadOutputs<T>& out, const RankTargets<T>& targets, double beta);

/// Parameter naming: laser.<i>.*, cam.<i>.*, head.rot.<i>.*, head.trans.<i>.*,
/// and the temporary pretraining heads pretrain.rot.0.*, pretrain.trans.0.*.
template <typename T>
class OdometryNet {
 public:
  explicit OdometryNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::span<const LayerSpec> laser_layers() const { return laser_; }
  std::span<const LayerSpec> cam_layers() const { return cam_; }
  std::span<const LayerSpec> rot_head_layers() const { return rot_head_; }
  std::span<const LayerSpec> trans_head_layers() const { return trans_head_; }
  std::span<const LayerSpec> pretrain_rot_layers() const { return pre_rot_; }
  std::span<const LayerSpec> pretrain_trans_layers() const { return pre_trans_; }

  void register_laser(ParamStore<T>& store) const;
  void register_cam(ParamStore<T>& store) const;
  void register_fusion_heads(ParamStore<T>& store) const;
  void register_pretrain_heads(ParamStore<T>& store) const;
  void register_sensor(Sensor sensor, ParamStore<T>& store) const;

  Var<T> cnn_laser_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> scans, const ForwardContext& ctx) const;
  Var<T> cnn_cam_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> images, const ForwardContext& ctx) const;
  Var<T> sensor_forward(Sensor sensor, Tape<T>& tape, ParamStore<T>& store, Var<T> input,
                        const ForwardContext& ctx) const;
  HeadOutputs<T> fusion_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> laser_feat, Var<T> cam_feat,
                                const ForwardContext& ctx) const;
  /// Temporary single-sensor heads: linear(F -> k-1) -> sigmoid for each quantity.
  HeadOutputs<T> pretrain_forward(Tape<T>& tape, ParamStore<T>& store, Var<T> feat, const ForwardContext& ctx) const;

 private:
  ModelConfig config_;
  std::vector<LayerSpec> laser_;
  std::vector<LayerSpec> cam_;
  std::vector<LayerSpec> rot_head_;
  std::vector<LayerSpec> trans_head_;
  std::vector<LayerSpec> pre_rot_;
  std::vector<LayerSpec> pre_trans_;
};

extern template class OdometryNet<float>;
extern template class OdometryNet<double>;

std::string_view sensor_name(Sensor sensor);
/// Parameter-name prefix of a sensor's CNN: "laser" or "cam".
std::string_view sensor_prefix(Sensor sensor);

}  // namespace lcodom
