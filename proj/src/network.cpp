#include "cdnet/network.hpp"

#include <fstream>
#include <sstream>

#include "cdnet/cdt_io.hpp"

namespace cdnet {

namespace {

std::string lvl(const char* prefix, std::size_t l) { return prefix + std::to_string(l); }

void trace_row(ShapeTrace* trace, std::string label, const Shape& s) {
  if (trace != nullptr) trace->push_back({std::move(label), s});
}

Shape doubled(const Shape& s) { return {s.n, s.c, 2 * s.h, 2 * s.w}; }

// Layer specs shared by build() and shape_plan().
ConvSpec enc_conv1(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::same3x3(l == 1 ? c.input_channels : c.filters(l - 1), c.filters(l));
}
ConvSpec enc_conv2(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::same3x3(c.filters(l), c.filters(l));
}
ConvSpec enc_down(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::down3x3(c.filters(l), c.filters(l));
}
ConvSpec dec_project(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::pointwise(c.filters(l + 1), c.filters(l));
}
ConvSpec dec_conv1(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::same3x3(2 * c.filters(l), c.filters(l));
}
ConvSpec dec_conv2(const NetworkConfig& c, std::size_t l) {
  return ConvSpec::same3x3(c.filters(l), c.filters(l));
}
ConvSpec aux_step(std::size_t channels) { return ConvSpec::same3x3(channels, channels / 2); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void NetworkConfig::validate() const {
  if (levels < 2) throw ConfigError("NetworkConfig: levels must be >= 2");
  if (base_filters == 0 || input_channels == 0 || input_h == 0 || input_w == 0) {
    throw ConfigError("NetworkConfig: base_filters, input_channels and input size must be positive");
  }
  const std::size_t div = std::size_t{1} << (levels - 1);
  if (input_h % div != 0 || input_w % div != 0) {
    throw ConfigError("NetworkConfig: input size " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " must be divisible by 2^(levels-1) = " +
                      std::to_string(div));
  }
  if (enable_asdic && !enable_fw) {
    throw ConfigError("NetworkConfig: enable_asdic requires enable_fw");
  }
  if (enable_aux && levels < 3) {
    throw ConfigError("NetworkConfig: enable_aux requires levels >= 3 (branches start at level 2)");
  }
  if (aux_per_branch_loss && !enable_aux) {
    throw ConfigError("NetworkConfig: aux_per_branch_loss requires enable_aux");
  }
  if (gn_groups == 0) throw ConfigError("NetworkConfig: gn_groups must be positive");
}

std::string NetworkConfig::canonical() const {
  std::ostringstream os;
  os << "levels=" << levels << " base_filters=" << base_filters << " input_h=" << input_h
     << " input_w=" << input_w << " input_channels=" << input_channels
     << " enable_aux=" << enable_aux << " enable_fw=" << enable_fw
     << " enable_asdic=" << enable_asdic << " gn_groups=" << gn_groups
     << " aux_per_branch_loss=" << aux_per_branch_loss;
  return os.str();
}

std::string NetworkConfig::digest() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

NetworkConfig parse_network_config(const std::string& canonical) {
  NetworkConfig c;
  std::istringstream is(canonical);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("network config: malformed token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    std::size_t v = 0;
    try {
      v = std::stoul(tok.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("network config: bad value in '" + tok + "'");
    }
    if (key == "levels") c.levels = v;
    else if (key == "base_filters") c.base_filters = v;
    else if (key == "input_h") c.input_h = v;
    else if (key == "input_w") c.input_w = v;
    else if (key == "input_channels") c.input_channels = v;
    else if (key == "enable_aux") c.enable_aux = v != 0;
    else if (key == "enable_fw") c.enable_fw = v != 0;
    else if (key == "enable_asdic") c.enable_asdic = v != 0;
    else if (key == "gn_groups") c.gn_groups = v;
    else if (key == "aux_per_branch_loss") c.aux_per_branch_loss = v != 0;
    else throw ConfigError("network config: unknown key '" + key + "'");
  }
  return c;
}

template <typename T>
Network<T> Network<T>::build(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net;
  net.config_ = cfg;
  std::mt19937_64 rng(seed);
  ParamStore<T>& st = net.store_;
  const std::size_t L = cfg.levels;

  for (std::size_t l = 1; l <= L; ++l) {
    const std::string g = lvl("enc", l);
    const Partition p = Partition::kEncoder;
    EncoderLevel e;
    e.conv1 = ConvLayer<T>::make(st, g + ".conv1", p, g, enc_conv1(cfg, l), rng, false);
    e.norm = GroupNormLayer<T>::make(st, g + ".norm", p, g, cfg.filters(l), cfg.gn_groups);
    e.conv2 = ConvLayer<T>::make(st, g + ".conv2", p, g, enc_conv2(cfg, l), rng);
    if (l < L) e.down = ConvLayer<T>::make(st, g + ".down", p, g, enc_down(cfg, l), rng);
    net.encoder_.push_back(std::move(e));
  }

  if (cfg.enable_aux) {
    for (std::size_t l = 2; l < L; ++l) {
      AuxBranch b;
      b.level = l;
      std::size_t ch = cfg.filters(l);
      for (std::size_t k = 1; k < l; ++k) {
        const std::string name = lvl("aux", l) + ".step" + std::to_string(k);
        const std::string group = "W_" + std::to_string(l) + std::to_string(k);
        AuxStep s;
        s.conv = ConvLayer<T>::make(st, name + ".conv", Partition::kAuxBranch, group, aux_step(ch),
                                    rng, false);
        s.norm = GroupNormLayer<T>::make(st, name + ".norm", Partition::kAuxBranch, group, ch / 2,
                                         cfg.gn_groups);
        b.steps.push_back(s);
        ch /= 2;
      }
      net.aux_.push_back(std::move(b));
    }
    if (cfg.aux_per_branch_loss) {
      for (auto& b : net.aux_) {
        b.head = ConvLayer<T>::make(st, lvl("aux", b.level) + ".head", Partition::kAuxHead,
                                    "aux_head", ConvSpec::pointwise(cfg.filters(1), 1), rng);
      }
    } else {
      net.aux_head_ = ConvLayer<T>::make(st, "aux.head", Partition::kAuxHead, "aux_head",
                                         ConvSpec::pointwise(cfg.filters(1), 1), rng);
    }
  }

  net.decoder_.resize(L - 1);
  for (std::size_t l = L - 1; l >= 1; --l) {
    const std::string g = lvl("dec", l);
    const Partition p = Partition::kDecoder;
    DecoderLevel d;
    d.project = ConvLayer<T>::make(st, g + ".project", p, g, dec_project(cfg, l), rng);
    if (cfg.enable_fw) {
      FwGeometry geom{cfg.filters(l), cfg.filters(l + 1), cfg.height(l + 1), cfg.width(l + 1),
                      cfg.enable_asdic};
      d.fw = FwBlock<T>::make(st, lvl("fw", l), geom, rng);
    }
    d.conv1 = ConvLayer<T>::make(st, g + ".conv1", p, g, dec_conv1(cfg, l), rng, false);
    d.norm = GroupNormLayer<T>::make(st, g + ".norm", p, g, cfg.filters(l), cfg.gn_groups);
    d.conv2 = ConvLayer<T>::make(st, g + ".conv2", p, g, dec_conv2(cfg, l), rng);
    net.decoder_[l - 1] = std::move(d);
  }
  net.out_head_ = ConvLayer<T>::make(st, "out.head", Partition::kDecoder, "out",
                                     ConvSpec::pointwise(cfg.filters(1), 1), rng);
  return net;
}

template <typename T>
ShapeTrace Network<T>::shape_plan(const NetworkConfig& cfg, std::size_t batch) {
  cfg.validate();
  ShapeTrace t;
  const std::size_t L = cfg.levels;
  Shape x{batch, cfg.input_channels, cfg.input_h, cfg.input_w};
  std::vector<Shape> skips;
  trace_row(&t, "enc1.input", x);
  for (std::size_t l = 1; l <= L; ++l) {
    const std::string g = lvl("enc", l);
    Shape a = enc_conv1(cfg, l).output_shape(x);
    trace_row(&t, g + ".conv1", a);
    trace_row(&t, g + ".gn", a);
    Shape s = enc_conv2(cfg, l).output_shape(a);
    trace_row(&t, g + ".conv2", s);
    skips.push_back(s);
    if (l < L) {
      x = enc_down(cfg, l).output_shape(s);
      trace_row(&t, g + ".down", x);
    }
  }
  if (cfg.enable_aux) {
    std::vector<Shape> outs;
    for (std::size_t l = 2; l < L; ++l) {
      Shape v = skips[l - 1];
      for (std::size_t k = 1; k < l; ++k) {
        v = doubled(aux_step(v.c).output_shape(v));
        trace_row(&t, lvl("aux", l) + ".step" + std::to_string(k), v);
      }
      trace_row(&t, lvl("aux", l) + ".out", v);
      outs.push_back(v);
    }
    const Shape head = ConvSpec::pointwise(cfg.filters(1), 1).output_shape(outs.front());
    if (cfg.aux_per_branch_loss) {
      for (std::size_t l = 2; l < L; ++l) trace_row(&t, lvl("aux", l) + ".output", head);
    } else {
      trace_row(&t, "aux.sum", outs.front());
      trace_row(&t, "aux.output", head);
    }
  }
  Shape below = skips.back();
  for (std::size_t l = L - 1; l >= 1; --l) {
    const std::string g = lvl("dec", l);
    const Shape up = doubled(below);
    trace_row(&t, g + ".upsample", up);
    const Shape proj = dec_project(cfg, l).output_shape(up);
    trace_row(&t, g + ".project", proj);
    if (cfg.enable_fw) trace_row(&t, lvl("fw", l) + ".out", skips[l - 1]);
    const Shape cat{proj.n, proj.c + skips[l - 1].c, proj.h, proj.w};
    trace_row(&t, g + ".up", cat);
    const Shape a = dec_conv1(cfg, l).output_shape(cat);
    trace_row(&t, g + ".conv1", a);
    trace_row(&t, g + ".gn", a);
    below = dec_conv2(cfg, l).output_shape(a);
    trace_row(&t, g + ".conv2", below);
  }
  trace_row(&t, "dec1.output", ConvSpec::pointwise(cfg.filters(1), 1).output_shape(below));
  return t;
}

template <typename T>
ForwardOutputs<T> Network<T>::forward(const Tensor<T>& input, ShapeTrace* trace) const {
  return run(input, nullptr, trace);
}

template <typename T>
ForwardOutputs<T> Network<T>::forward_train(const Tensor<T>& input, Tape& tape,
                                            ShapeTrace* trace) const {
  return run(input, &tape, trace);
}

template <typename T>
ForwardOutputs<T> Network<T>::run(const Tensor<T>& input, Tape* tape, ShapeTrace* trace) const {
  const NetworkConfig& cfg = config_;
  const std::size_t L = cfg.levels;
  if (input.c() != cfg.input_channels || input.h() != cfg.input_h || input.w() != cfg.input_w ||
      input.n() == 0) {
    throw ShapeError("network input: expected Nx" + std::to_string(cfg.input_channels) + "x" +
                     std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w) + ", got " +
                     input.shape().str());
  }
  if (tape != nullptr) {
    *tape = Tape{};
    tape->enc.resize(L);
    tape->dec.resize(L - 1);
  }
  const ParamStore<T>& st = store_;

  trace_row(trace, "enc1.input", input.shape());
  std::vector<Tensor<T>> skips(L);
  Tensor<T> x = input;
  for (std::size_t l = 1; l <= L; ++l) {
    const EncoderLevel& e = encoder_[l - 1];
    const std::string g = lvl("enc", l);
    GroupNormCache<T> cache;
    Tensor<T> pre = e.conv1.forward(st, x);
    trace_row(trace, g + ".conv1", pre.shape());
    Tensor<T> act1 = activate(e.norm.forward(st, pre, &cache), Activation::kRelu);
    trace_row(trace, g + ".gn", act1.shape());
    skips[l - 1] = activate(e.conv2.forward(st, act1), Activation::kRelu);
    trace_row(trace, g + ".conv2", skips[l - 1].shape());
    Tensor<T> down;
    if (e.down) {
      down = activate(e.down->forward(st, skips[l - 1]), Activation::kRelu);
      trace_row(trace, g + ".down", down.shape());
    }
    if (tape != nullptr) {
      auto& te = tape->enc[l - 1];
      te.input = std::move(x);
      te.pre_norm = std::move(pre);
      te.norm = std::move(cache);
      te.act1 = std::move(act1);
      te.skip = skips[l - 1];
      te.down = down;
    }
    x = std::move(down);
  }

  ForwardOutputs<T> out;
  if (cfg.enable_aux) {
    if (tape != nullptr) tape->aux.resize(aux_.size());
    std::vector<Tensor<T>> volumes;
    for (std::size_t b = 0; b < aux_.size(); ++b) {
      const AuxBranch& br = aux_[b];
      Tensor<T> v = skips[br.level - 1];
      for (std::size_t k = 0; k < br.steps.size(); ++k) {
        GroupNormCache<T> cache;
        Tensor<T> pre = br.steps[k].conv.forward(st, v);
        Tensor<T> act = activate(br.steps[k].norm.forward(st, pre, &cache), Activation::kRelu);
        Tensor<T> up = upsample_bilinear2x(act);
        trace_row(trace, lvl("aux", br.level) + ".step" + std::to_string(k + 1), up.shape());
        if (tape != nullptr) {
          tape->aux[b].push_back({std::move(v), std::move(pre), std::move(act), std::move(cache)});
        }
        v = std::move(up);
      }
      trace_row(trace, lvl("aux", br.level) + ".out", v.shape());
      volumes.push_back(std::move(v));
    }
    if (cfg.aux_per_branch_loss) {
      for (std::size_t b = 0; b < aux_.size(); ++b) {
        Tensor<T> o = activate(aux_[b].head->forward(st, volumes[b]), Activation::kSigmoid);
        trace_row(trace, lvl("aux", aux_[b].level) + ".output", o.shape());
        out.aux_branches.push_back(std::move(o));
      }
      if (tape != nullptr) tape->aux_branch_out = out.aux_branches;
    } else {
      Tensor<T> sum = volumes.front();
      for (std::size_t b = 1; b < volumes.size(); ++b) sum += volumes[b];
      trace_row(trace, "aux.sum", sum.shape());
      Tensor<T> o = activate(aux_head_->forward(st, sum), Activation::kSigmoid);
      trace_row(trace, "aux.output", o.shape());
      if (tape != nullptr) {
        tape->aux_sum = std::move(sum);
        tape->aux_out = o;
      }
      out.aux = std::move(o);
    }
    if (tape != nullptr) tape->aux_volumes = std::move(volumes);
  }

  Tensor<T> below = skips[L - 1];
  for (std::size_t l = L - 1; l >= 1; --l) {
    const DecoderLevel& d = decoder_[l - 1];
    const std::string g = lvl("dec", l);
    Tensor<T> up = upsample_bilinear2x(below);
    trace_row(trace, g + ".upsample", up.shape());
    Tensor<T> proj = activate(d.project.forward(st, up), Activation::kRelu);
    trace_row(trace, g + ".project", proj.shape());
    Tensor<T> skip_used;
    if (d.fw) {
      skip_used = d.fw->forward(st, skips[l - 1], below, tape ? &tape->dec[l - 1].fw : nullptr).output;
      trace_row(trace, lvl("fw", l) + ".out", skip_used.shape());
    } else {
      skip_used = skips[l - 1];
    }
    Tensor<T> cat = concat_channels(proj, skip_used);
    trace_row(trace, g + ".up", cat.shape());
    GroupNormCache<T> cache;
    Tensor<T> pre = d.conv1.forward(st, cat);
    trace_row(trace, g + ".conv1", pre.shape());
    Tensor<T> act1 = activate(d.norm.forward(st, pre, &cache), Activation::kRelu);
    trace_row(trace, g + ".gn", act1.shape());
    Tensor<T> o = activate(d.conv2.forward(st, act1), Activation::kRelu);
    trace_row(trace, g + ".conv2", o.shape());
    if (tape != nullptr) {
      auto& td = tape->dec[l - 1];
      td.below = std::move(below);
      td.up = std::move(up);
      td.proj = std::move(proj);
      td.skip_used = std::move(skip_used);
      td.cat = std::move(cat);
      td.pre_norm = std::move(pre);
      td.norm = std::move(cache);
      td.act1 = std::move(act1);
      td.out = o;
    }
    below = std::move(o);
  }
  out.main = activate(out_head_.forward(st, below), Activation::kSigmoid);
  trace_row(trace, "dec1.output", out.main.shape());
  if (tape != nullptr) tape->main_out = out.main;
  return out;
}

template <typename T>
void Network<T>::backward(const Tape& tape, const TotalLoss<T>& grads) {
  const NetworkConfig& cfg = config_;
  const std::size_t L = cfg.levels;
  ParamStore<T>& st = store_;
  if (grads.grad_main.shape() != tape.main_out.shape()) {
    throw ShapeError("network backward: main gradient " + grads.grad_main.shape().str() +
                     " does not match output " + tape.main_out.shape().str());
  }
  std::vector<Tensor<T>> d_skip(L);
  for (std::size_t l = 1; l <= L; ++l) d_skip[l - 1] = Tensor<T>(tape.enc[l - 1].skip.shape());

  // Main head and decoder, top level first.
  Tensor<T> d_logits = activate_backward(tape.main_out, grads.grad_main, Activation::kSigmoid);
  Tensor<T> d_below = out_head_.backward(st, tape.dec[0].out, d_logits);
  for (std::size_t l = 1; l <= L - 1; ++l) {
    const DecoderLevel& d = decoder_[l - 1];
    const auto& td = tape.dec[l - 1];
    Tensor<T> g = activate_backward(td.out, d_below, Activation::kRelu);
    g = d.conv2.backward(st, td.act1, g);
    g = activate_backward(td.act1, g, Activation::kRelu);
    g = d.norm.backward(st, td.pre_norm, td.norm, g);
    g = d.conv1.backward(st, td.cat, g);
    auto [d_proj, d_skip_used] = split_channels(g, td.proj.c());
    Tensor<T> gp = activate_backward(td.proj, d_proj, Activation::kRelu);
    gp = d.project.backward(st, td.up, gp);
    Tensor<T> next = upsample_bilinear2x_backward(td.below.shape(), gp);
    if (d.fw) {
      auto [d_enc, d_dec] = d.fw->backward(st, td.fw, d_skip_used);
      d_skip[l - 1] += d_enc;
      next += d_dec;
    } else {
      d_skip[l - 1] += d_skip_used;
    }
    d_below = std::move(next);
  }
  d_skip[L - 1] += d_below;

  // Deep-supervision branches.
  if (cfg.enable_aux) {
    std::vector<Tensor<T>> d_volumes(aux_.size());
    if (cfg.aux_per_branch_loss) {
      if (grads.grad_aux_branches.size() != aux_.size()) {
        throw ShapeError("network backward: expected " + std::to_string(aux_.size()) +
                         " branch gradients");
      }
      for (std::size_t b = 0; b < aux_.size(); ++b) {
        Tensor<T> dl = activate_backward(tape.aux_branch_out[b], grads.grad_aux_branches[b],
                                         Activation::kSigmoid);
        d_volumes[b] = aux_[b].head->backward(st, tape.aux_volumes[b], dl);
      }
    } else {
      if (!grads.grad_aux) throw ShapeError("network backward: missing auxiliary-output gradient");
      Tensor<T> dl = activate_backward(tape.aux_out, *grads.grad_aux, Activation::kSigmoid);
      Tensor<T> d_sum = aux_head_->backward(st, tape.aux_sum, dl);
      for (auto& dv : d_volumes) dv = d_sum;
    }
    for (std::size_t b = 0; b < aux_.size(); ++b) {
      const AuxBranch& br = aux_[b];
      Tensor<T> g = std::move(d_volumes[b]);
      for (std::size_t k = br.steps.size(); k-- > 0;) {
        const auto& ts = tape.aux[b][k];
        g = upsample_bilinear2x_backward(ts.act.shape(), g);
        g = activate_backward(ts.act, g, Activation::kRelu);
        g = br.steps[k].norm.backward(st, ts.pre_norm, ts.norm, g);
        g = br.steps[k].conv.backward(st, ts.input, g);
      }
      d_skip[br.level - 1] += g;
    }
  }

  // Encoder, deepest level first.
  Tensor<T> d_down;
  for (std::size_t l = L; l >= 1; --l) {
    const EncoderLevel& e = encoder_[l - 1];
    const auto& te = tape.enc[l - 1];
    Tensor<T> g = std::move(d_skip[l - 1]);
    if (e.down) {
      Tensor<T> gd = activate_backward(te.down, d_down, Activation::kRelu);
      g += e.down->backward(st, te.skip, gd);
    }
    g = activate_backward(te.skip, g, Activation::kRelu);
    g = e.conv2.backward(st, te.act1, g);
    g = activate_backward(te.act1, g, Activation::kRelu);
    g = e.norm.backward(st, te.pre_norm, te.norm, g);
    d_down = e.conv1.backward(st, te.input, g, l > 1);
  }
}

// ---- weight persistence ----------------------------------------------------

namespace {

constexpr const char* kWeightsTag = "cdnet-weights v1";

struct Manifest {
  NetworkConfig config;
  std::string config_line;
  std::string digest;
  struct Row {
    std::string name, partition, group;
    Shape shape;
  };
  std::vector<Row> rows;
};

Shape parse_shape(const std::string& s) {
  Shape out;
  std::size_t vals[4];
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const auto next = s.find('x', pos);
    const std::string tok = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      vals[i] = std::stoul(tok);
    } catch (const std::exception&) {
      throw IoError("weights manifest: bad shape '" + s + "'");
    }
    if ((next == std::string::npos) != (i == 3)) throw IoError("weights manifest: bad shape '" + s + "'");
    pos = next + 1;
  }
  out = {vals[0], vals[1], vals[2], vals[3]};
  return out;
}

Manifest read_manifest(std::istream& in, const std::filesystem::path& path) {
  Manifest m;
  std::string line;
  if (!std::getline(in, line) || line != kWeightsTag) {
    throw IoError(path.string() + ": not a cdnet weights file");
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "config") {
      m.config_line = line.substr(7);
      m.config = parse_network_config(m.config_line);
    } else if (key == "digest") {
      is >> m.digest;
    } else if (key == "param") {
      Manifest::Row r;
      std::string shape;
      is >> r.name >> r.partition >> r.group >> shape;
      r.shape = parse_shape(shape);
      m.rows.push_back(std::move(r));
    } else if (key == "count" || key == "dtype") {
      continue;
    } else {
      throw IoError(path.string() + ": unknown manifest line '" + line + "'");
    }
  }
  if (!ended) throw IoError(path.string() + ": truncated manifest (no 'end' line)");
  return m;
}

}  // namespace

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kEncoder: return "encoder";
    case Partition::kAuxBranch: return "aux_branch";
    case Partition::kAuxHead: return "aux_head";
    case Partition::kDecoder: return "decoder";
    case Partition::kFeatureWeighting: return "fw";
  }
  return "?";
}

Partition partition_from_name(const std::string& s) {
  for (Partition p : {Partition::kEncoder, Partition::kAuxBranch, Partition::kAuxHead,
                      Partition::kDecoder, Partition::kFeatureWeighting}) {
    if (s == partition_name(p)) return p;
  }
  throw ConfigError("unknown parameter partition '" + s + "'");
}

template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const auto& st = net.store();
  out << kWeightsTag << "\n";
  out << "config " << net.config().canonical() << "\n";
  out << "digest " << net.config().digest() << "\n";
  out << "dtype " << (std::is_same_v<T, float> ? "f32" : "f64") << "\n";
  out << "count " << st.size() << "\n";
  for (const auto& e : st.entries()) {
    out << "param " << e.name << " " << partition_name(e.partition) << " " << e.group << " "
        << e.param.value.shape().str() << "\n";
  }
  out << "end\n";
  for (const auto& e : st.entries()) write_cdt(out, tensor_to_cdt(e.param.value));
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
void load_weights(Network<T>& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  const Manifest m = read_manifest(in, path);
  const std::string expect = net.config().digest();
  if (m.digest != expect || m.config.digest() != expect) {
    throw IoError(path.string() + ": config digest mismatch (file " + m.digest + " [" +
                  m.config_line + "], network " + expect + " [" + net.config().canonical() + "])");
  }
  auto& st = net.store();
  if (m.rows.size() != st.size()) {
    throw IoError(path.string() + ": manifest lists " + std::to_string(m.rows.size()) +
                  " tensors, network has " + std::to_string(st.size()));
  }
  std::vector<Tensor<T>> loaded;
  loaded.reserve(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& row = m.rows[i];
    const auto& e = st.entry(i);
    if (row.name != e.name || row.shape != e.param.value.shape()) {
      throw IoError(path.string() + ": tensor " + std::to_string(i) + " is " + row.name + " " +
                    row.shape.str() + ", expected " + e.name + " " + e.param.value.shape().str());
    }
    NdArray blob;
    try {
      blob = read_cdt(in);
    } catch (const IoError& err) {
      throw IoError(path.string() + ": tensor " + row.name + ": " + err.what());
    }
    Tensor<T> t = tensor_from_cdt<T>(blob);
    if (t.shape() != row.shape) {
      throw IoError(path.string() + ": blob for " + row.name + " has shape " + t.shape().str());
    }
    loaded.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) st.value(i) = std::move(loaded[i]);
}

NetworkConfig read_weights_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return read_manifest(in, path).config;
}

template class Network<float>;
template class Network<double>;
template void save_weights(const Network<float>&, const std::filesystem::path&);
template void save_weights(const Network<double>&, const std::filesystem::path&);
template void load_weights(Network<float>&, const std::filesystem::path&);
template void load_weights(Network<double>&, const std::filesystem::path&);

}  // namespace cdnet
