#pragma once

// Differentiable primitives. Every forward has a hand-derived backward; parameter
// gradients are accumulated (+=) into the caller's buffers, input gradients are
// returned fresh.

#include <cstddef>
#include <type_traits>
#include <utility>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  /// Throws ConfigError on non-positive sizes or channel/group mismatch.
  void validate() const;
  /// floor((in + 2p - d(k-1) - 1)/s) + 1; throws ConfigError when < 1.
  std::size_t out_extent(std::size_t in, std::size_t kernel) const;
  Shape output_shape(const Shape& input) const;
  Shape weight_shape() const;
  Shape bias_shape() const { return {1, out_channels, 1, 1}; }

  static ConvSpec same3x3(std::size_t in, std::size_t out, std::size_t dilation = 1) {
    return {in, out, 3, 3, 1, dilation, dilation, 1};
  }
  static ConvSpec pointwise(std::size_t in, std::size_t out) { return {in, out, 1, 1, 1, 1, 0, 1}; }
  static ConvSpec down3x3(std::size_t in, std::size_t out) { return {in, out, 3, 3, 2, 1, 1, 1}; }
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                 const ConvSpec& spec);

/// Returns dL/dinput (when want_input_grad) and accumulates weight/bias gradients.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                          const Tensor<T>& grad_out, Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                          bool want_input_grad = true);

inline constexpr double kGroupNormEps = 1e-5;

/// Group count used when a layer does not pin one: 8 if channels is a multiple of 8, else
/// one group per channel.
std::size_t default_gn_groups(std::size_t channels, std::size_t preferred = 8);

template <typename T>
struct GroupNormCache {
  std::size_t groups = 0;
  std::vector<T> mean;  // per (sample, group)
  std::vector<T> rstd;
};

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t num_groups, GroupNormCache<T>* cache = nullptr);

template <typename T>
Tensor<T> group_norm_backward(const Tensor<T>& input, const Tensor<T>& gamma,
                              const GroupNormCache<T>& cache, const Tensor<T>& grad_out,
                              Tensor<T>* grad_gamma, Tensor<T>* grad_beta);

enum class Activation { kRelu, kSigmoid };

template <typename T>
T sigmoid(T x);

template <typename T>
Tensor<T> activate(const Tensor<T>& input, Activation kind);

/// Both derivatives are expressible through the forward output.
template <typename T>
Tensor<T> activate_backward(const Tensor<T>& output, const Tensor<T>& grad_out, Activation kind);

/// Bilinear resize with corner-aligned sampling: output pixel i reads the source at
/// i*(in-1)/(out-1) (0 when out == 1). Weights per output pixel sum to one.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> resize_bilinear_backward(const Shape& input_shape, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& input) {
  return resize_bilinear(input, input.h() * 2, input.w() * 2);
}

template <typename T>
Tensor<T> upsample_bilinear2x_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  return resize_bilinear_backward(input_shape, grad_out);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Splits a gradient of concat(a, b) back into the two blocks.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, std::size_t leading_channels);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// out[n,c,y,x] = input[n,c,y,x] * weights[n,c,0,0]
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& input, const Tensor<T>& weights);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> scale_channels_backward(const Tensor<T>& input,
                                                        const Tensor<T>& weights,
                                                        const Tensor<T>& grad_out);

/// out[n,c,y,x] = input[n,c,y,x] * map[n,0,y,x]
template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& input, const Tensor<T>& map);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> scale_spatial_backward(const Tensor<T>& input, const Tensor<T>& map,
                                                       const Tensor<T>& grad_out);

}  // namespace cdnet
