#pragma once

// Feature Weighting (FW) skip module and its parts.
//
// Given an encoder volume C (C_E x H_E x W_E) and the decoder signal S from the
// level below (C_S x H_S x W_S, with H_E = 2 H_S), FW computes
//
//   nu    = AsDiC(S)                       (or S itself when AsDiC is disabled)
//   T     = sigmoid(pointwise(depthwise_full(nu)))        one weight per C_E channel
//   C~    = T * C
//   zeta  = relu(pointwise(S) + conv2x2_stride2(C~))
//   Q     = upsample2x(sigmoid(pointwise_to_1(zeta)))     one weight per pixel
//   C^    = Q * C~
//
// The spatial branch deliberately consumes the channel-refined C~, never C.

#include <array>
#include <random>
#include <string>
#include <utility>

#include "cdnet/layers.hpp"

namespace cdnet {

/// Assembled dilated convolution: d2(S) + d3(d2(S)) + d5(d3(d2(S))) + pointwise(S).
template <typename T>
class Asdic {
 public:
  static constexpr std::array<std::size_t, 3> kRates{2, 3, 5};

  struct Tape {
    Tensor<T> input;
    Tensor<T> r2;  // d2(S)
    Tensor<T> r3;  // d3(d2(S))
  };

  static Asdic make(ParamStore<T>& store, const std::string& prefix, Partition part,
                    const std::string& group, std::size_t channels, std::mt19937_64& rng);

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& s, Tape* tape = nullptr) const;
  Tensor<T> backward(ParamStore<T>& store, const Tape& tape, const Tensor<T>& grad_nu) const;

  std::size_t channels() const { return channels_; }
  const ConvLayer<T>& dilated(std::size_t i) const { return dilated_[i]; }
  const ConvLayer<T>& pointwise() const { return pointwise_; }

 private:
  std::size_t channels_ = 0;
  std::array<ConvLayer<T>, 3> dilated_{};
  ConvLayer<T> pointwise_{};
};

/// Channel refinement: full-spatial depth-wise squeeze of nu, point-wise C_S -> C_E, sigmoid.
template <typename T>
class ChannelRefine {
 public:
  struct Tape {
    Tensor<T> encoder;  // C
    Tensor<T> nu;
    Tensor<T> delta;    // N x C_S x 1 x 1
    Tensor<T> weights;  // T, N x C_E x 1 x 1
  };

  static ChannelRefine make(ParamStore<T>& store, const std::string& prefix, Partition part,
                            const std::string& group, std::size_t encoder_channels,
                            std::size_t decoder_channels, std::size_t decoder_h,
                            std::size_t decoder_w, std::mt19937_64& rng);

  /// Returns (C~, T).
  std::pair<Tensor<T>, Tensor<T>> forward(const ParamStore<T>& store, const Tensor<T>& encoder,
                                          const Tensor<T>& nu, Tape* tape = nullptr) const;
  /// Returns (dC, dnu).
  std::pair<Tensor<T>, Tensor<T>> backward(ParamStore<T>& store, const Tape& tape,
                                           const Tensor<T>& grad_refined) const;

  const ConvLayer<T>& squeeze() const { return squeeze_; }
  const ConvLayer<T>& expand() const { return expand_; }

 private:
  ConvLayer<T> squeeze_{};
  ConvLayer<T> expand_{};
};

/// Spatial refinement: single-channel attention map Q broadcast over the C_E channels of C~.
template <typename T>
class SpatialRefine {
 public:
  struct Tape {
    Tensor<T> refined;  // C~
    Tensor<T> decoder;  // S
    Tensor<T> zeta;     // post-ReLU
    Tensor<T> q_low;    // post-sigmoid at H_S x W_S
    Tensor<T> q;        // upsampled
  };

  static SpatialRefine make(ParamStore<T>& store, const std::string& prefix, Partition part,
                            const std::string& group, std::size_t encoder_channels,
                            std::size_t decoder_channels, std::mt19937_64& rng);

  /// Returns (C^, Q).
  std::pair<Tensor<T>, Tensor<T>> forward(const ParamStore<T>& store, const Tensor<T>& refined,
                                          const Tensor<T>& decoder, Tape* tape = nullptr) const;
  /// Returns (dC~, dS).
  std::pair<Tensor<T>, Tensor<T>> backward(ParamStore<T>& store, const Tape& tape,
                                           const Tensor<T>& grad_out) const;

  const ConvLayer<T>& from_decoder() const { return from_decoder_; }
  const ConvLayer<T>& from_encoder() const { return from_encoder_; }
  const ConvLayer<T>& to_map() const { return to_map_; }

 private:
  ConvLayer<T> from_decoder_{};  // 1x1 on S
  ConvLayer<T> from_encoder_{};  // 2x2 stride 2 on C~
  ConvLayer<T> to_map_{};        // 1x1 -> 1 channel
};

struct FwGeometry {
  std::size_t encoder_channels = 0;
  std::size_t decoder_channels = 0;
  std::size_t decoder_h = 0;
  std::size_t decoder_w = 0;
  bool use_asdic = true;
};

template <typename T>
struct FwResult {
  Tensor<T> output;           // C^
  Tensor<T> channel_weights;  // T
  Tensor<T> spatial_map;      // Q
};

template <typename T>
class FwBlock {
 public:
  struct Tape {
    typename Asdic<T>::Tape asdic;
    typename ChannelRefine<T>::Tape channel;
    typename SpatialRefine<T>::Tape spatial;
  };

  static FwBlock make(ParamStore<T>& store, const std::string& prefix, const FwGeometry& geom,
                      std::mt19937_64& rng);

  FwResult<T> forward(const ParamStore<T>& store, const Tensor<T>& encoder, const Tensor<T>& decoder,
                      Tape* tape = nullptr) const;
  /// Returns (dC, dS).
  std::pair<Tensor<T>, Tensor<T>> backward(ParamStore<T>& store, const Tape& tape,
                                           const Tensor<T>& grad_out) const;

  const FwGeometry& geometry() const { return geom_; }
  const Asdic<T>& asdic() const { return asdic_; }
  const ChannelRefine<T>& channel() const { return channel_; }
  const SpatialRefine<T>& spatial() const { return spatial_; }

 private:
  void check_inputs(const Tensor<T>& encoder, const Tensor<T>& decoder) const;

  FwGeometry geom_{};
  Asdic<T> asdic_{};
  ChannelRefine<T> channel_{};
  SpatialRefine<T> spatial_{};
};

}  // namespace cdnet
