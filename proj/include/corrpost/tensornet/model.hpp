#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "corrpost/tensornet/layers.hpp"

namespace corrpost::nn {

enum class LayerKind { kInputBn, kConv3x3, kConv1x1, kBatchNorm, kSwish, kResBlock, kGlobalAvgPool, kDense, kSigmoid };

std::string_view to_string(LayerKind kind);

/// One row of the architecture table.
struct LayerSpec {
  LayerKind kind;
  std::size_t width;
  std::size_t stride;
  std::string name;
  /// Per-sample output shape (C, H, W), or (C) after pooling.
  std::vector<std::size_t> output_shape;
};

/// Residual network layout: input BN, 3x3 stem, then stages of basic blocks
/// whose widths are base_width * multiplier; every stage after the first
/// opens with a stride-2 block.
struct ArchSpec {
  std::size_t base_width = 21;
  std::vector<std::size_t> stage_multipliers = {1, 2, 4, 8};
  std::size_t blocks_per_stage = 2;
  std::size_t input_side = 32;

  std::vector<std::size_t> stage_widths() const;
  void validate() const;
};

/// Slim ResNet-18 style binary classifier: [N,1,S,S] -> [N] probabilities.
template <typename T>
class ResNet {
 public:
  explicit ResNet(const ArchSpec& spec, std::uint64_t init_seed = 0);

  ResNet(const ResNet&) = delete;
  ResNet& operator=(const ResNet&) = delete;
  ResNet(ResNet&&) noexcept = default;
  ResNet& operator=(ResNet&&) noexcept = default;

  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  /// Populates gradients of every trainable tensor from the most recent
  /// training-mode forward pass; the recorded pass is consumed.
  void backward(const Tensor<T>& labels, T l2);

  /// Mean BCE of the recorded forward output plus the L2 term.
  T loss(const Tensor<T>& labels, T l2);

  void zero_grad();

  /// All tensors (trainable and running statistics) in checkpoint order.
  std::vector<Parameter<T>*> parameters();
  std::vector<Parameter<T>*> trainable_parameters();
  std::size_t param_count();

  std::vector<LayerSpec> architecture() const;
  const ArchSpec& spec() const { return spec_; }
  DenseSigmoid<T>& head() { return head_; }
  BatchNorm2d<T>& input_bn() { return input_bn_; }
  Conv2d<T>& stem() { return stem_; }
  std::vector<std::unique_ptr<ResidualBlock<T>>>& blocks() { return blocks_; }

 private:
  ArchSpec spec_;
  BatchNorm2d<T> input_bn_;
  Conv2d<T> stem_;
  BatchNorm2d<T> stem_bn_;
  Swish<T> stem_act_;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
  std::vector<std::size_t> block_strides_;
  GlobalAvgPool<T> pool_;
  DenseSigmoid<T> head_;
  Tensor<T> last_output_;
  bool recorded_ = false;
};

/// Number of trainable scalars (BN gains/shifts included, running stats not).
template <typename T>
std::size_t param_count(ResNet<T>& model) {
  return model.param_count();
}

/// "CNNW" checkpoint: magic, u16 version, u32 tensor count, then per tensor
/// u16 name length, UTF-8 name, u8 dtype (0 f32, 1 f64), u8 rank, u32 dims,
/// little-endian payload.
template <typename T>
std::string encode_checkpoint(ResNet<T>& model);
template <typename T>
void decode_checkpoint(std::string_view bytes, ResNet<T>& model);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, ResNet<T>& model);
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ResNet<T>& model);

/// Architecture table + spec as pretty-printed JSON.
template <typename T>
std::string architecture_json(ResNet<T>& model);
ArchSpec arch_spec_from_json(std::string_view json_text);

}  // namespace corrpost::nn
