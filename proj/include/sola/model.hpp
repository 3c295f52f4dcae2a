#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sola/tensor.hpp"

namespace sola {

struct ModelConfig {
  int dim_m = 32;
  int hidden_h = 32;
  int kernel_k = 3;
  bool residual_enabled = true;

  /// Throws ConfigError for non-positive dims or a kernel outside {1,3,5,7}.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// A 1-D convolution kernel of shape k x c_in x c_out, kept as one
/// c_in x c_out matrix per tap. Tap j multiplies the input row at offset
/// j - (k-1)/2.
struct ConvWeight {
  std::vector<Mat> taps;

  int kernel() const { return static_cast<int>(taps.size()); }
  int in_channels() const { return taps.empty() ? 0 : static_cast<int>(taps[0].rows()); }
  int out_channels() const { return taps.empty() ? 0 : static_cast<int>(taps[0].cols()); }

  static ConvWeight zeros(int k, int c_in, int c_out);
};

/// Every trainable tensor of the refinement stack and the projector. Also
/// used to hold gradients and optimizer moments.
struct ParamTensors {
  ConvWeight conv1_w;  // k x m x h
  Vec conv1_b;         // h
  ConvWeight conv2_w;  // k x h x m
  Vec conv2_b;         // m
  Mat proj1_w;         // m x m
  Vec proj1_b;         // m
  Mat proj2_w;         // m x m
  Vec proj2_b;         // m

  /// Zero tensors congruent with `like`.
  static ParamTensors zeros_like(const ParamTensors& like);

  /// Visits each tensor as (name, shape, flat row-major storage) in a fixed
  /// order. A conv weight arrives as k consecutive tap slices that share the
  /// tensor's name and its k x c_in x c_out shape.
  using Visitor = std::function<void(const std::string& name, const std::vector<int>& shape,
                                     std::span<double> values)>;
  void for_each_tensor_mut(const Visitor& fn);
  using ConstVisitor = std::function<void(const std::string& name, const std::vector<int>& shape,
                                          std::span<const double> values)>;
  void for_each_tensor(const ConstVisitor& fn) const;

  std::size_t size() const;
  bool all_finite() const;
};

using GradientSet = ParamTensors;

struct SolaParams : ParamTensors {
  bool residual_enabled = true;

  ModelConfig config() const;
};

/// Uniform(+-sqrt(6 / fan_in)) weights and zero biases. fan_in is k * c_in
/// for convolutions and m for projector layers.
SolaParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Zero-padded "same" convolution: W x c_in -> W x c_out.
Mat conv1d_same(const Mat& x, const ConvWeight& weight, const Vec& bias);

/// relu(conv1(x)) -> conv2, plus x when the residual skip is on.
Mat sola_forward(const SolaParams& params, const Mat& window);

/// Row-wise relu(z W1 + b1) W2 + b2.
Mat proj_forward(const ParamTensors& params, const Mat& z);

/// Text header "SOLA1 k h m residual" followed by one record per tensor:
/// a text line "name rank d0 d1 ..." and the little-endian float64 payload.
void save_checkpoint(const SolaParams& params, const std::filesystem::path& path);
SolaParams load_checkpoint(const std::filesystem::path& path);
/// Same as above, but throws ConfigError unless the stored config equals
/// `expected`.
SolaParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::string encode_checkpoint(const SolaParams& params);
SolaParams decode_checkpoint(const std::string& bytes);

}  // namespace sola
