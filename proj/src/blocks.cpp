#include "cdnet/blocks.hpp"

namespace cdnet {

namespace {

template <typename T>
void require_channels(const Tensor<T>& t, std::size_t c, const std::string& what) {
  if (t.c() != c) {
    throw ShapeError(what + ": expected " + std::to_string(c) + " channels, got " +
                     std::to_string(t.c()) + " (shape " + t.shape().str() + ")");
  }
}

}  // namespace

// ---- Asdic -----------------------------------------------------------------

template <typename T>
Asdic<T> Asdic<T>::make(ParamStore<T>& store, const std::string& prefix, Partition part,
                        const std::string& group, std::size_t channels, std::mt19937_64& rng) {
  Asdic a;
  a.channels_ = channels;
  for (std::size_t i = 0; i < kRates.size(); ++i) {
    a.dilated_[i] = ConvLayer<T>::make(store, prefix + ".dilated" + std::to_string(kRates[i]), part,
                                       group, ConvSpec::same3x3(channels, channels, kRates[i]), rng);
  }
  a.pointwise_ = ConvLayer<T>::make(store, prefix + ".pointwise", part, group,
                                    ConvSpec::pointwise(channels, channels), rng);
  return a;
}

template <typename T>
Tensor<T> Asdic<T>::forward(const ParamStore<T>& store, const Tensor<T>& s, Tape* tape) const {
  require_channels(s, channels_, "asdic");
  Tensor<T> r2 = dilated_[0].forward(store, s);
  Tensor<T> r3 = dilated_[1].forward(store, r2);
  Tensor<T> nu = dilated_[2].forward(store, r3);
  nu += r2;
  nu += r3;
  nu += pointwise_.forward(store, s);
  if (tape != nullptr) {
    tape->input = s;
    tape->r2 = std::move(r2);
    tape->r3 = std::move(r3);
  }
  return nu;
}

template <typename T>
Tensor<T> Asdic<T>::backward(ParamStore<T>& store, const Tape& tape, const Tensor<T>& grad_nu) const {
  Tensor<T> d_r3 = dilated_[2].backward(store, tape.r3, grad_nu);
  d_r3 += grad_nu;
  Tensor<T> d_r2 = dilated_[1].backward(store, tape.r2, d_r3);
  d_r2 += grad_nu;
  Tensor<T> ds = dilated_[0].backward(store, tape.input, d_r2);
  ds += pointwise_.backward(store, tape.input, grad_nu);
  return ds;
}

// ---- ChannelRefine ---------------------------------------------------------

template <typename T>
ChannelRefine<T> ChannelRefine<T>::make(ParamStore<T>& store, const std::string& prefix,
                                        Partition part, const std::string& group,
                                        std::size_t encoder_channels, std::size_t decoder_channels,
                                        std::size_t decoder_h, std::size_t decoder_w,
                                        std::mt19937_64& rng) {
  ChannelRefine r;
  const ConvSpec depthwise{decoder_channels, decoder_channels, decoder_h, decoder_w, 1, 1, 0,
                           decoder_channels};
  r.squeeze_ = ConvLayer<T>::make(store, prefix + ".squeeze", part, group, depthwise, rng);
  r.expand_ = ConvLayer<T>::make(store, prefix + ".expand", part, group,
                                 ConvSpec::pointwise(decoder_channels, encoder_channels), rng);
  return r;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> ChannelRefine<T>::forward(const ParamStore<T>& store,
                                                          const Tensor<T>& encoder,
                                                          const Tensor<T>& nu, Tape* tape) const {
  require_channels(nu, squeeze_.spec.in_channels, "channel_refine (nu)");
  require_channels(encoder, expand_.spec.out_channels, "channel_refine (encoder)");
  if (nu.h() != squeeze_.spec.kernel_h || nu.w() != squeeze_.spec.kernel_w) {
    throw ShapeError("channel_refine: depth-wise kernel " + std::to_string(squeeze_.spec.kernel_h) +
                     "x" + std::to_string(squeeze_.spec.kernel_w) +
                     " does not match decoder spatial size " + std::to_string(nu.h()) + "x" +
                     std::to_string(nu.w()));
  }
  Tensor<T> delta = squeeze_.forward(store, nu);
  Tensor<T> weights = activate(expand_.forward(store, delta), Activation::kSigmoid);
  Tensor<T> refined = scale_channels(encoder, weights);
  if (tape != nullptr) {
    tape->encoder = encoder;
    tape->nu = nu;
    tape->delta = std::move(delta);
    tape->weights = weights;
  }
  return {std::move(refined), std::move(weights)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> ChannelRefine<T>::backward(ParamStore<T>& store, const Tape& tape,
                                                           const Tensor<T>& grad_refined) const {
  auto [d_encoder, d_weights] = scale_channels_backward(tape.encoder, tape.weights, grad_refined);
  Tensor<T> d_logits = activate_backward(tape.weights, d_weights, Activation::kSigmoid);
  Tensor<T> d_delta = expand_.backward(store, tape.delta, d_logits);
  Tensor<T> d_nu = squeeze_.backward(store, tape.nu, d_delta);
  return {std::move(d_encoder), std::move(d_nu)};
}

// ---- SpatialRefine ---------------------------------------------------------

template <typename T>
SpatialRefine<T> SpatialRefine<T>::make(ParamStore<T>& store, const std::string& prefix,
                                        Partition part, const std::string& group,
                                        std::size_t encoder_channels, std::size_t decoder_channels,
                                        std::mt19937_64& rng) {
  SpatialRefine r;
  r.from_decoder_ = ConvLayer<T>::make(store, prefix + ".from_decoder", part, group,
                                       ConvSpec::pointwise(decoder_channels, encoder_channels), rng);
  r.from_encoder_ = ConvLayer<T>::make(store, prefix + ".from_encoder", part, group,
                                       ConvSpec{encoder_channels, encoder_channels, 2, 2, 2, 1, 0, 1},
                                       rng);
  r.to_map_ = ConvLayer<T>::make(store, prefix + ".to_map", part, group,
                                 ConvSpec::pointwise(encoder_channels, 1), rng);
  return r;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> SpatialRefine<T>::forward(const ParamStore<T>& store,
                                                          const Tensor<T>& refined,
                                                          const Tensor<T>& decoder,
                                                          Tape* tape) const {
  require_channels(refined, from_encoder_.spec.in_channels, "spatial_refine (encoder)");
  require_channels(decoder, from_decoder_.spec.in_channels, "spatial_refine (decoder)");
  if (refined.h() != 2 * decoder.h() || refined.w() != 2 * decoder.w() ||
      refined.n() != decoder.n()) {
    throw ConfigError("spatial_refine: encoder resolution " + refined.shape().str() +
                      " must be exactly twice the decoder resolution " + decoder.shape().str());
  }
  Tensor<T> pre = from_decoder_.forward(store, decoder);
  pre += from_encoder_.forward(store, refined);
  Tensor<T> zeta = activate(pre, Activation::kRelu);
  Tensor<T> q_low = activate(to_map_.forward(store, zeta), Activation::kSigmoid);
  Tensor<T> q = upsample_bilinear2x(q_low);
  Tensor<T> out = scale_spatial(refined, q);
  if (tape != nullptr) {
    tape->refined = refined;
    tape->decoder = decoder;
    tape->zeta = std::move(zeta);
    tape->q_low = std::move(q_low);
    tape->q = q;
  }
  return {std::move(out), std::move(q)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> SpatialRefine<T>::backward(ParamStore<T>& store, const Tape& tape,
                                                           const Tensor<T>& grad_out) const {
  auto [d_refined, d_q] = scale_spatial_backward(tape.refined, tape.q, grad_out);
  Tensor<T> d_q_low = upsample_bilinear2x_backward(tape.q_low.shape(), d_q);
  Tensor<T> d_map_logits = activate_backward(tape.q_low, d_q_low, Activation::kSigmoid);
  Tensor<T> d_zeta = to_map_.backward(store, tape.zeta, d_map_logits);
  Tensor<T> d_pre = activate_backward(tape.zeta, d_zeta, Activation::kRelu);
  d_refined += from_encoder_.backward(store, tape.refined, d_pre);
  Tensor<T> d_decoder = from_decoder_.backward(store, tape.decoder, d_pre);
  return {std::move(d_refined), std::move(d_decoder)};
}

// ---- FwBlock ---------------------------------------------------------------

template <typename T>
FwBlock<T> FwBlock<T>::make(ParamStore<T>& store, const std::string& prefix, const FwGeometry& geom,
                            std::mt19937_64& rng) {
  if (geom.encoder_channels == 0 || geom.decoder_channels == 0 || geom.decoder_h == 0 ||
      geom.decoder_w == 0) {
    throw ConfigError("FwBlock: channel counts and decoder resolution must be positive");
  }
  FwBlock b;
  b.geom_ = geom;
  const Partition part = Partition::kFeatureWeighting;
  if (geom.use_asdic) {
    b.asdic_ = Asdic<T>::make(store, prefix + ".asdic", part, prefix, geom.decoder_channels, rng);
  }
  b.channel_ = ChannelRefine<T>::make(store, prefix + ".channel", part, prefix,
                                      geom.encoder_channels, geom.decoder_channels, geom.decoder_h,
                                      geom.decoder_w, rng);
  b.spatial_ = SpatialRefine<T>::make(store, prefix + ".spatial", part, prefix,
                                      geom.encoder_channels, geom.decoder_channels, rng);
  return b;
}

template <typename T>
void FwBlock<T>::check_inputs(const Tensor<T>& encoder, const Tensor<T>& decoder) const {
  require_channels(encoder, geom_.encoder_channels, "fw (encoder)");
  require_channels(decoder, geom_.decoder_channels, "fw (decoder)");
  if (decoder.h() != geom_.decoder_h || decoder.w() != geom_.decoder_w) {
    throw ShapeError("fw: decoder signal " + decoder.shape().str() + " does not match configured " +
                     std::to_string(geom_.decoder_h) + "x" + std::to_string(geom_.decoder_w));
  }
}

template <typename T>
FwResult<T> FwBlock<T>::forward(const ParamStore<T>& store, const Tensor<T>& encoder,
                                const Tensor<T>& decoder, Tape* tape) const {
  check_inputs(encoder, decoder);
  Tensor<T> nu = geom_.use_asdic ? asdic_.forward(store, decoder, tape ? &tape->asdic : nullptr)
                                 : decoder;
  auto [refined, weights] = channel_.forward(store, encoder, nu, tape ? &tape->channel : nullptr);
  auto [out, q] = spatial_.forward(store, refined, decoder, tape ? &tape->spatial : nullptr);
  return {std::move(out), std::move(weights), std::move(q)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> FwBlock<T>::backward(ParamStore<T>& store, const Tape& tape,
                                                     const Tensor<T>& grad_out) const {
  auto [d_refined, d_decoder] = spatial_.backward(store, tape.spatial, grad_out);
  auto [d_encoder, d_nu] = channel_.backward(store, tape.channel, d_refined);
  if (geom_.use_asdic) {
    d_decoder += asdic_.backward(store, tape.asdic, d_nu);
  } else {
    d_decoder += d_nu;
  }
  return {std::move(d_encoder), std::move(d_decoder)};
}

template class Asdic<float>;
template class Asdic<double>;
template class ChannelRefine<float>;
template class ChannelRefine<double>;
template class SpatialRefine<float>;
template class SpatialRefine<double>;
template class FwBlock<float>;
template class FwBlock<double>;

}  // namespace cdnet
