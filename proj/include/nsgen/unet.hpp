#pragma once

// Fully convolutional encoder-decoder with skip connections mapping a 3- or
// 4-channel node field to (u, v, p).
//
// Activations are stored channel-major per pixel: a batch of N images with C
// channels on an H x W lattice is a column-major (C, N*H*W) matrix whose
// column n*H*W + j*W + i holds the channel vector of node (j, i) of image n.
// Every convolution is 4x4, stride 2, padding 1.

#include "nsgen/grid.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nsgen {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelConfig {
  int input_size = 32;
  int in_channels = 3;
  int base_width = 64;
  int max_width = 512;
  std::array<double, 3> channel_scales{1.0, 1.0, 2.0};
  std::uint64_t seed = 0;

  int depth() const;
  /// Output channels of encoder block k (0-based, outermost first).
  int encoder_width(int k) const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Mode { train, inference };

template <typename S>
struct ConvLayer {
  bool transposed = false;
  int cin = 0;
  int cout = 0;
  // Forward conv: (cout, 16*cin), column (ky*4 + kx)*cin + c.
  // Transposed conv: (16*cout, cin), row (ky*4 + kx)*cout + c.
  Mat<S> weight;
  Vec<S> bias;
  Mat<S> grad_weight;
  Vec<S> grad_bias;
};

template <typename S>
struct NormLayer {
  Vec<S> gamma, beta;
  Vec<S> running_mean, running_var;
  Vec<S> grad_gamma, grad_beta;
};

enum class Activation { leaky_relu, tanh };

template <typename S>
struct Block {
  ConvLayer<S> conv;
  std::optional<NormLayer<S>> norm;
  Activation act = Activation::leaky_relu;
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;

template <typename S>
struct BlockCache {
  Mat<S> input;  // im2col matrix for forward convs, raw input for transposed
  Mat<S> xhat;
  Vec<S> inv_std;
  Mat<S> out;
};

template <typename S>
struct ForwardCache {
  int batch = 0;
  Mode mode = Mode::train;
  std::vector<BlockCache<S>> enc;
  std::vector<BlockCache<S>> dec;
};

/// View of one named parameter tensor and its gradient.
template <typename S>
struct ParamRef {
  std::string name;
  S* data = nullptr;
  S* grad = nullptr;  // null for running statistics
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool trainable() const { return grad != nullptr; }
  Eigen::Index size() const { return rows * cols; }
};

template <typename S>
class UNet {
 public:
  UNet() = default;
  /// Builds the network: Kaiming-normal weights, biases uniform in
  /// +-1/sqrt(fan_in), all drawn from config.seed.
  explicit UNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int depth() const { return static_cast<int>(enc_.size()); }

  /// Scaled output (3, N*a*a) for a batch (in_channels, N*a*a). Train mode
  /// normalizes with batch statistics and updates the running statistics.
  Mat<S> forward(const Mat<S>& x, int batch, Mode mode, ForwardCache<S>* cache = nullptr);
  /// Inference-mode forward; never mutates the model.
  Mat<S> infer(const Mat<S>& x, int batch) const;

  /// Accumulates parameter gradients from d(loss)/d(scaled output).
  void backward(const ForwardCache<S>& cache, const Mat<S>& grad_out);

  void zero_grad();
  std::vector<ParamRef<S>> params();
  long parameter_count() const;  // trainable scalars

  std::vector<Block<S>>& encoder() { return enc_; }
  std::vector<Block<S>>& decoder() { return dec_; }
  const std::vector<Block<S>>& encoder() const { return enc_; }
  const std::vector<Block<S>>& decoder() const { return dec_; }

  template <typename T>
  UNet<T> cast() const;

 private:
  template <typename T>
  friend class UNet;
  friend UNet<float> transfer_expand_channels(const UNet<float>&, int);

  Mat<S> run(const Mat<S>& x, int batch, Mode mode, ForwardCache<S>* cache,
             std::vector<std::pair<Vec<S>, Vec<S>>>* batch_stats) const;

  ModelConfig config_;
  std::vector<Block<S>> enc_;  // outermost first
  std::vector<Block<S>> dec_;  // innermost first; the last block emits 3 channels
};

/// Pack input tensors into a (channels, N*a*a) batch matrix.
template <typename S>
Mat<S> pack_inputs(const std::vector<const InputTensor*>& inputs);

/// Column block `index` of a (3, N*a*a) output as a field.
template <typename S>
FlowField<S> unpack_output(const Mat<S>& out, int index, const GridSpec& grid);

/// Write prescribed values (outer ring and solid nodes) into a field.
template <typename S>
void overwrite_dirichlet(const BoundaryLayout& layout, FlowField<S>& f);

/// Single-sample inference: forward, then known boundary values written back.
FlowField<double> predict(const UNet<float>& model, const InputTensor& input);

// ---------------------------------------------------------------------------
// Transfer surgeries

/// Copy of `src` with one more input channel whose first-layer weights are
/// zero. Rejects any channel delta other than +1.
UNet<float> transfer_expand_channels(const UNet<float>& src, int new_in_channels);

struct DepthTransfer {
  int copied_blocks = 0;
  std::vector<std::pair<std::string, std::string>> mapping;  // new block <- source block
};

/// Model for a doubled input size: the outermost `copy_blocks` encoder and
/// decoder blocks are copied (default depth - 1), the rest are fresh.
UNet<float> transfer_expand_depth(const UNet<float>& src, int new_size, int copy_blocks = -1,
                                  DepthTransfer* info = nullptr);

}  // namespace nsgen
