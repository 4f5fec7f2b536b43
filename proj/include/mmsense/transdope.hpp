#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsense/dataset.hpp"
#include "mmsense/error.hpp"
#include "mmsense/radar.hpp"

namespace mmsense::transdope {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline constexpr int kConvKernel = 3;  // 3x3, same padding
inline constexpr int kPoolStages = 2;  // each a 2x2 max pool

/// Architecture hyperparameters. Every tensor shape follows from these.
struct TransDopeConfig {
  int seq_len = 8;
  int range_bins = 64;
  int doppler_bins = 16;
  int channels = 3;
  int conv_filters = 32;
  int embed_dim = 128;
  int heads = 2;
  int encoder_layers = 3;
  int ffn_kernel = 3;  // token-axis width of the convolution replacing the dense FFN
  /// Multiplies raw ARD magnitudes before the first convolution. Zero means
  /// 1 / (range_bins * doppler_bins), the peak gain of the unnormalized 2-D DFT.
  double input_scale = 0.0;
  /// Adds the sinusoidal position table to the tokens. Only tests turn it off.
  bool positional_encoding = true;

  void validate() const;
  int pooled_range() const { return range_bins / 4; }
  int pooled_doppler() const { return doppler_bins / 4; }
  int flat_features() const { return pooled_range() * pooled_doppler() * conv_filters; }
  int head_dim() const { return embed_dim / heads; }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(range_bins) * doppler_bins * channels;
  }
  std::size_t sequence_size() const { return frame_size() * seq_len; }
  double effective_input_scale() const {
    return input_scale > 0.0 ? input_scale : 1.0 / (static_cast<double>(range_bins) * doppler_bins);
  }
  bool operator==(const TransDopeConfig&) const = default;

  static TransDopeConfig for_radar(const RadarConfig& radar);
};

/// 3x3 same-padded convolution. weight is (9 * in) x out with rows ordered
/// [kernel row][kernel col][input channel].
struct Conv2d {
  Matrix weight;
  RowVector bias;
};

/// y = x * weight + bias, weight is in x out.
struct Linear {
  Matrix weight;
  RowVector bias;
};

struct LayerNorm {
  RowVector gamma;
  RowVector beta;
};

/// Pre-norm encoder block: x + MHA(LN1(x)), then y + ReLU(TokenConv(LN2(y))).
/// token_conv.weight is (ffn_kernel * d) x d, rows ordered [tap][channel].
struct EncoderLayer {
  Linear query, key, value, output;
  Linear token_conv;
  LayerNorm norm1, norm2;
};

struct TransDopeModel {
  TransDopeConfig config;
  Conv2d conv1, conv2;
  Linear embedding;
  std::vector<EncoderLayer> layers;
  Linear head;
  Matrix positional;  // seq_len x embed_dim, fixed
};

/// Named view of one trainable tensor, in declaration order.
struct ParamRef {
  std::string name;
  double* data;
  std::size_t size;
};

std::vector<ParamRef> parameters(TransDopeModel& model);
/// Parameter count of `model` (the positional table is excluded).
std::size_t param_count(const TransDopeModel& model);
/// The same count from the configuration alone.
std::size_t param_count(const TransDopeConfig& config);
std::size_t encoder_layer_param_count(int embed_dim, int ffn_kernel);

/// sin/cos table: pos(t, 2i) = sin(t / 10000^(2i/d)), pos(t, 2i+1) = cos(...).
Matrix positional_table(int seq_len, int embed_dim);

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit LN scale.
TransDopeModel make_model(const TransDopeConfig& config, std::uint64_t seed);
/// Same shapes as `model`, every value zero.
TransDopeModel zeros_like(const TransDopeModel& model);

/// Shared conv1 -> pool -> conv2 -> pool stack on one frame
/// ([range][doppler][channel] layout). Returns a (N/4 * P/4) x filters map.
Matrix frame_features(std::span<const float> frame, const TransDopeModel& model);

/// frame_features for each of the seq_len frames, in order.
std::vector<Matrix> time_conv_forward(std::span<const float> sequence, const TransDopeModel& model);

/// Flattens each frame's map, projects it to embed_dim and adds the
/// positional table. features is seq_len x flat_features.
Matrix embed_tokens(const Matrix& features, const TransDopeModel& model);

/// One encoder block. When `attention` is given it receives the softmax
/// weights of every head (each seq_len x seq_len).
Matrix encoder_layer_forward(const Matrix& tokens, const EncoderLayer& layer, const TransDopeConfig& config,
                             std::vector<Matrix>* attention = nullptr);

/// Pre-sigmoid output for a whole sequence. Throws Error on any non-finite
/// intermediate.
double forward_logit(std::span<const float> sequence, const TransDopeModel& model);
/// Probability of metal present.
double forward(std::span<const float> sequence, const TransDopeModel& model);
double forward(const ArdSequence& sequence, const TransDopeModel& model);
/// Runs the encoder and head on precomputed per-frame features
/// (seq_len x flat_features).
double forward_from_features(const Matrix& features, const TransDopeModel& model);

/// Binary cross-entropy of `logit` against `label`, computed stably.
double bce_with_logit(double logit, bool label);
double sigmoid(double x);

/// Runs forward + backward for one sequence and adds `weight` times the
/// gradient of its BCE loss into `grad`. Returns the loss; writes the
/// probability to `probability` when given.
double accumulate_gradient(std::span<const float> sequence, bool label, const TransDopeModel& model,
                           TransDopeModel& grad, double weight = 1.0, double* probability = nullptr);

/// Per-frame classifier used to pretrain the time convolutions:
/// conv1 -> pool -> conv2 -> pool -> flatten -> linear -> sigmoid.
struct FrameClassifier {
  TransDopeConfig config;
  Conv2d conv1, conv2;
  Linear head;
};

FrameClassifier make_frame_classifier(const TransDopeConfig& config, std::uint64_t seed);
FrameClassifier zeros_like(const FrameClassifier& net);
std::vector<ParamRef> parameters(FrameClassifier& net);
double forward(std::span<const float> frame, const FrameClassifier& net);
double accumulate_gradient(std::span<const float> frame, bool label, const FrameClassifier& net,
                           FrameClassifier& grad, double weight = 1.0, double* probability = nullptr);

/// Sliding-window inference. Each pushed frame's time-convolution features
/// are computed once and cached, so a window update costs one frame of
/// convolution plus the encoder. Results equal forward() on the same window.
class StreamingClassifier {
 public:
  explicit StreamingClassifier(const TransDopeModel& model) : model_(&model) {}

  /// Adds a frame; returns the window probability once seq_len frames are held.
  std::optional<double> push(std::span<const float> frame);
  std::size_t size() const { return window_.size(); }
  void reset() { window_.clear(); }

 private:
  const TransDopeModel* model_;
  std::deque<Matrix> window_;
};

}  // namespace mmsense::transdope
