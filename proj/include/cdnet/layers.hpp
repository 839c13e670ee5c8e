#pragma once

// Thin parameter-owning wrappers over the primitives in ops.hpp. A layer stores
// only indices into a ParamStore, so one layer description serves any number
// of concurrent forward passes.

#include <random>
#include <string>

#include "cdnet/ops.hpp"
#include "cdnet/param_store.hpp"

namespace cdnet {

template <typename T>
struct ConvLayer {
  ConvSpec spec;
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;

  static ConvLayer make(ParamStore<T>& store, const std::string& name, Partition part,
                        const std::string& group, const ConvSpec& spec, std::mt19937_64& rng,
                        bool with_bias = true) {
    spec.validate();
    ConvLayer l;
    l.spec = spec;
    l.has_bias = with_bias;
    l.weight = store.add(name + ".weight", part, group, spec.weight_shape());
    init_kernel(store.value(l.weight), spec.weight_shape().c * spec.kernel_h * spec.kernel_w, rng);
    if (with_bias) l.bias = store.add(name + ".bias", part, group, spec.bias_shape());
    return l;
  }

  Shape output_shape(const Shape& in) const { return spec.output_shape(in); }

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x) const {
    return conv2d(x, store.value(weight), has_bias ? &store.value(bias) : nullptr, spec);
  }

  Tensor<T> backward(ParamStore<T>& store, const Tensor<T>& x, const Tensor<T>& dy,
                     bool want_input_grad = true) const {
    return conv2d_backward(x, store.value(weight), spec, dy, &store.grad(weight),
                           has_bias ? &store.grad(bias) : nullptr, want_input_grad);
  }
};

template <typename T>
struct GroupNormLayer {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t groups = 1;

  static GroupNormLayer make(ParamStore<T>& store, const std::string& name, Partition part,
                             const std::string& group, std::size_t channels,
                             std::size_t preferred_groups) {
    GroupNormLayer l;
    l.groups = default_gn_groups(channels, preferred_groups);
    l.gamma = store.add(name + ".gamma", part, group, {1, channels, 1, 1});
    l.beta = store.add(name + ".beta", part, group, {1, channels, 1, 1});
    store.value(l.gamma).fill(T(1));
    return l;
  }

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, GroupNormCache<T>* cache) const {
    return group_norm(x, store.value(gamma), store.value(beta), groups, cache);
  }

  Tensor<T> backward(ParamStore<T>& store, const Tensor<T>& x, const GroupNormCache<T>& cache,
                     const Tensor<T>& dy) const {
    return group_norm_backward(x, store.value(gamma), cache, dy, &store.grad(gamma),
                               &store.grad(beta));
  }
};

}  // namespace cdnet
