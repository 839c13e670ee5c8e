#pragma once

// Full CDNetFW graph: five-level encoder, deep-supervision branches off the
// intermediate encoder levels, FW-gated skips and the main decoder.
//
// Level l (1-based) carries base_filters * 2^(l-1) channels at input_size / 2^(l-1).
//   encoder l : conv3x3 -> GN -> ReLU -> conv3x3 -> ReLU [-> conv3x3 stride 2 -> ReLU]
//   decoder l : upsample x2 -> conv1x1 (halve) -> ReLU -> concat(skip) ->
//               conv3x3 -> GN -> ReLU -> conv3x3 -> ReLU
//   skip l    : FW(encoder_l, decoder_{l+1}) or the raw encoder volume
//   aux l     : (l-1) x [conv3x3 halve -> GN -> ReLU -> upsample x2], for 2 <= l < levels;
//               branch volumes are summed, then conv1x1 -> sigmoid.
//   output    : conv1x1 -> sigmoid
// Convolutions followed by GN carry no bias (GN removes it).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdnet/blocks.hpp"
#include "cdnet/losses.hpp"

namespace cdnet {

struct NetworkConfig {
  std::size_t levels = 5;
  std::size_t base_filters = 64;
  std::size_t input_h = 512;
  std::size_t input_w = 512;
  std::size_t input_channels = 1;
  bool enable_aux = true;
  bool enable_fw = true;
  bool enable_asdic = true;
  std::size_t gn_groups = 8;
  bool aux_per_branch_loss = false;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
  std::size_t filters(std::size_t level) const { return base_filters << (level - 1); }
  std::size_t height(std::size_t level) const { return input_h >> (level - 1); }
  std::size_t width(std::size_t level) const { return input_w >> (level - 1); }
  /// One-line `key=value` rendering of every field, used for the digest.
  std::string canonical() const;
  /// 16 hex digits (FNV-1a 64 of canonical()).
  std::string digest() const;

  static NetworkConfig full_scale() { return {}; }
  static NetworkConfig scaled(std::size_t base, std::size_t size) {
    NetworkConfig c;
    c.base_filters = base;
    c.input_h = size;
    c.input_w = size;
    return c;
  }
  static NetworkConfig vanilla_unet(std::size_t base, std::size_t size) {
    NetworkConfig c = scaled(base, size);
    c.enable_aux = c.enable_fw = c.enable_asdic = false;
    return c;
  }
};

/// (label, N x C x H x W) of one intermediate tensor.
struct ShapeRow {
  std::string label;
  Shape shape;
  bool operator==(const ShapeRow&) const = default;
};
using ShapeTrace = std::vector<ShapeRow>;

template <typename T>
class Network {
 public:
  struct EncoderLevel {
    ConvLayer<T> conv1;
    GroupNormLayer<T> norm;
    ConvLayer<T> conv2;
    std::optional<ConvLayer<T>> down;
  };
  struct DecoderLevel {
    ConvLayer<T> project;  // 1x1, halves channels after upsampling
    std::optional<FwBlock<T>> fw;
    ConvLayer<T> conv1;
    GroupNormLayer<T> norm;
    ConvLayer<T> conv2;
  };
  struct AuxStep {
    ConvLayer<T> conv;
    GroupNormLayer<T> norm;
  };
  struct AuxBranch {
    std::size_t level = 0;
    std::vector<AuxStep> steps;
    std::optional<ConvLayer<T>> head;  // per-branch-loss mode only
  };

  /// Activations kept by forward_train for the backward pass.
  struct Tape;

  static Network build(const NetworkConfig& config, std::uint64_t seed);

  /// Shapes of every traced tensor, derived from the config alone (no allocation).
  static ShapeTrace shape_plan(const NetworkConfig& config, std::size_t batch = 1);

  /// Read-only inference; safe to call concurrently on one instance.
  ForwardOutputs<T> forward(const Tensor<T>& input, ShapeTrace* trace = nullptr) const;

  ForwardOutputs<T> forward_train(const Tensor<T>& input, Tape& tape,
                                  ShapeTrace* trace = nullptr) const;

  /// Accumulates parameter gradients from output gradients into the store.
  void backward(const Tape& tape, const TotalLoss<T>& grads);

  const NetworkConfig& config() const { return config_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  const std::vector<EncoderLevel>& encoder() const { return encoder_; }
  const std::vector<DecoderLevel>& decoder() const { return decoder_; }
  const std::vector<AuxBranch>& aux_branches() const { return aux_; }

 private:
  ForwardOutputs<T> run(const Tensor<T>& input, Tape* tape, ShapeTrace* trace) const;

  NetworkConfig config_;
  ParamStore<T> store_;
  std::vector<EncoderLevel> encoder_;  // index l-1
  std::vector<DecoderLevel> decoder_;  // index l-1, levels 1..levels-1
  std::vector<AuxBranch> aux_;
  std::optional<ConvLayer<T>> aux_head_;
  ConvLayer<T> out_head_{};
};

template <typename T>
struct Network<T>::Tape {
  struct Enc {
    Tensor<T> input, pre_norm, act1, skip, down;
    GroupNormCache<T> norm;
  };
  struct Dec {
    Tensor<T> below, up, proj, skip_used, cat, pre_norm, act1, out;
    GroupNormCache<T> norm;
    typename FwBlock<T>::Tape fw;
  };
  struct AuxStepTape {
    Tensor<T> input, pre_norm, act;
    GroupNormCache<T> norm;
  };
  std::vector<Enc> enc;
  std::vector<Dec> dec;
  std::vector<std::vector<AuxStepTape>> aux;
  std::vector<Tensor<T>> aux_volumes;  // per-branch outputs (upsampled)
  Tensor<T> aux_sum;
  Tensor<T> aux_out;
  std::vector<Tensor<T>> aux_branch_out;
  Tensor<T> main_out;
};

/// Weight file: text manifest (format tag, config, digest, one line per tensor)
/// terminated by "end", followed by one CDT1 blob per tensor in manifest order.
template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& path);

/// Throws IoError on digest mismatch, unknown/missing tensors or truncation.
template <typename T>
void load_weights(Network<T>& net, const std::filesystem::path& path);

/// Reads only the manifest's recorded configuration.
NetworkConfig read_weights_config(const std::filesystem::path& path);

NetworkConfig parse_network_config(const std::string& canonical);

}  // namespace cdnet
