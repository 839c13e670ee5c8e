#include "cdnet/gradient_suite.hpp"

#include <cmath>
#include <cstdint>
#include <random>

#include "cdnet/blocks.hpp"
#include "cdnet/errors.hpp"
#include "cdnet/gradcheck.hpp"
#include "cdnet/losses.hpp"
#include "cdnet/network.hpp"
#include "cdnet/ops.hpp"

namespace cdnet {
namespace {

using Rng = std::mt19937_64;
using Params = std::vector<Parameter<double>*>;

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

Parameter<double> random_param(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Parameter<double> p(s);
  p.value = random_tensor(s, rng, lo, hi);
  return p;
}

Tensor<double> random_mask(Shape s, Rng& rng, double p) {
  std::bernoulli_distribution d(p);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = d(rng) ? 1.0 : 0.0;
  return t;
}

// sum(coeff * y): its gradient with respect to y is coeff.
double probe(const Tensor<double>& y, const Tensor<double>& coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * coeff[i];
  return s;
}

Params store_params(ParamStore<double>& st) {
  Params out;
  for (auto& e : st.entries()) out.push_back(&e.param);
  return out;
}

void randomize(ParamStore<double>& st, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& e : st.entries())
    for (auto& v : e.param.value.vec()) v = d(rng);
}

void randomize_biases(ParamStore<double>& st, Rng& rng, double scale = 0.1) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& e : st.entries())
    if (e.name.ends_with(".bias"))
      for (auto& v : e.param.value.vec()) v = d(rng);
}

class Runner {
 public:
  Runner(const SuiteOptions& o, const std::function<void(const SuiteEntry&)>& progress)
      : options_(o), progress_(progress) {}

  GradCheckOptions check_options(std::size_t max_coords, std::uint64_t seed) const {
    GradCheckOptions g;
    g.step = options_.step;
    g.max_coords = max_coords;
    g.seed = seed;
    g.detect_kinks = true;
    g.tolerance = options_.tolerance;
    g.abs_floor = options_.abs_floor;
    return g;
  }

  // `one_seed(seed)` builds the case and returns its report.
  template <typename F>
  void run(const std::string& name, F&& one_seed) {
    SuiteEntry e;
    e.name = name;
    for (int seed = 0; seed < options_.seeds; ++seed) {
      const GradCheckReport r = one_seed(seed);
      ++e.seeds;
      e.coords += r.coords_checked;
      e.unconverged += r.kink_coords;
      e.violations += r.violations;
      if (r.max_rel_error > e.max_rel_error || e.seeds == 1) {
        e.max_rel_error = r.max_rel_error;
        e.worst_seed = seed;
        e.worst_analytic = r.worst_analytic;
        e.worst_numeric = r.worst_numeric;
      }
    }
    if (progress_) progress_(e);
    entries_.push_back(std::move(e));
  }

  std::vector<SuiteEntry> take() { return std::move(entries_); }

 private:
  SuiteOptions options_;
  std::function<void(const SuiteEntry&)> progress_;
  std::vector<SuiteEntry> entries_;
};

struct ConvCase {
  const char* name;
  Shape input;
  ConvSpec spec;
};

void primitives(Runner& run) {
  const ConvCase conv_cases[] = {
      {"plain3x3", {1, 2, 5, 5}, ConvSpec::same3x3(2, 3)},
      {"dilated2", {1, 2, 7, 6}, ConvSpec::same3x3(2, 2, 2)},
      {"dilated5", {1, 1, 6, 6}, ConvSpec::same3x3(1, 2, 5)},
      {"strided", {2, 2, 6, 6}, ConvSpec::down3x3(2, 3)},
      {"depthwise_full", {2, 3, 4, 5}, {3, 3, 4, 5, 1, 1, 0, 3}},
      {"pointwise", {1, 4, 3, 3}, ConvSpec::pointwise(4, 2)},
      {"patch2x2_s2", {1, 2, 6, 4}, {2, 3, 2, 2, 2, 1, 0, 1}},
      {"grouped", {1, 4, 5, 5}, {4, 6, 3, 2, 1, 1, 1, 2}},
  };
  for (const auto& c : conv_cases) {
    run.run(std::string("conv2d.") + c.name, [&](int seed) {
      Rng rng(static_cast<std::uint64_t>(seed) * 7919 + 3);
      auto x = random_param(c.input, rng);
      auto w = random_param(c.spec.weight_shape(), rng);
      auto b = random_param(c.spec.bias_shape(), rng);
      const auto coeff = random_tensor(c.spec.output_shape(c.input), rng);
      auto f = [&](bool with_grad) {
        const auto y = conv2d(x.value, w.value, &b.value, c.spec);
        if (with_grad) x.grad += conv2d_backward(x.value, w.value, c.spec, coeff, &w.grad, &b.grad);
        return probe(y, coeff);
      };
      return grad_check(f, {&x, &w, &b}, run.check_options(0, 0));
    });
  }

  run.run("group_norm", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 100);
    const std::size_t groups = seed % 2 ? 2 : 4;
    auto x = random_param({2, 4, 3, 3}, rng, -2.0, 2.0);
    auto gamma = random_param({1, 4, 1, 1}, rng, 0.5, 1.5);
    auto beta = random_param({1, 4, 1, 1}, rng);
    const auto coeff = random_tensor({2, 4, 3, 3}, rng);
    auto f = [&](bool with_grad) {
      GroupNormCache<double> cache;
      const auto y = group_norm(x.value, gamma.value, beta.value, groups, &cache);
      if (with_grad) x.grad += group_norm_backward(x.value, gamma.value, cache, coeff, &gamma.grad, &beta.grad);
      return probe(y, coeff);
    };
    return grad_check(f, {&x, &gamma, &beta}, run.check_options(0, 0));
  });

  run.run("group_norm+sigmoid", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 200);
    auto x = random_param({1, 8, 3, 3}, rng, -2.0, 2.0);
    auto gamma = random_param({1, 8, 1, 1}, rng, 0.5, 1.5);
    auto beta = random_param({1, 8, 1, 1}, rng);
    const auto coeff = random_tensor({1, 8, 3, 3}, rng);
    auto f = [&](bool with_grad) {
      GroupNormCache<double> cache;
      const auto n = group_norm(x.value, gamma.value, beta.value, 2, &cache);
      const auto y = activate(n, Activation::kSigmoid);
      if (with_grad) {
        const auto dn = activate_backward(y, coeff, Activation::kSigmoid);
        x.grad += group_norm_backward(x.value, gamma.value, cache, dn, &gamma.grad, &beta.grad);
      }
      return probe(y, coeff);
    };
    return grad_check(f, {&x, &gamma, &beta}, run.check_options(0, 0));
  });

  for (Activation kind : {Activation::kRelu, Activation::kSigmoid}) {
    run.run(kind == Activation::kRelu ? "relu" : "sigmoid", [&](int seed) {
      Rng rng(static_cast<std::uint64_t>(seed) + 300);
      auto x = random_param({1, 2, 3, 3}, rng, 0.1, 2.0);
      std::bernoulli_distribution flip(0.5);
      for (auto& v : x.value.vec()) v = flip(rng) ? -v : v;
      const auto coeff = random_tensor({1, 2, 3, 3}, rng);
      auto f = [&](bool with_grad) {
        const auto y = activate(x.value, kind);
        if (with_grad) x.grad += activate_backward(y, coeff, kind);
        return probe(y, coeff);
      };
      return grad_check(f, {&x}, run.check_options(0, 0));
    });
  }

  run.run("bilinear_upsample2x", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 400);
    auto x = random_param({1, 2, 3, 4}, rng);
    const auto coeff = random_tensor({1, 2, 6, 8}, rng);
    auto f = [&](bool with_grad) {
      const auto y = upsample_bilinear2x(x.value);
      if (with_grad) x.grad += upsample_bilinear2x_backward(x.value.shape(), coeff);
      return probe(y, coeff);
    };
    return grad_check(f, {&x}, run.check_options(0, 0));
  });

  run.run("concat+sigmoid", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 500);
    auto a = random_param({1, 2, 3, 3}, rng);
    auto b = random_param({1, 3, 3, 3}, rng);
    const auto coeff = random_tensor({1, 5, 3, 3}, rng);
    auto f = [&](bool with_grad) {
      const auto y = activate(concat_channels(a.value, b.value), Activation::kSigmoid);
      if (with_grad) {
        const auto [da, db] = split_channels(activate_backward(y, coeff, Activation::kSigmoid), 2);
        a.grad += da;
        b.grad += db;
      }
      return probe(y, coeff);
    };
    return grad_check(f, {&a, &b}, run.check_options(0, 0));
  });

  run.run("scale_channels+scale_spatial", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 600);
    auto x = random_param({2, 3, 4, 4}, rng);
    auto cw = random_param({2, 3, 1, 1}, rng);
    auto map = random_param({2, 1, 4, 4}, rng);
    const auto coeff = random_tensor({2, 3, 4, 4}, rng);
    auto f = [&](bool with_grad) {
      const auto mid = scale_channels(x.value, cw.value);
      const auto y = scale_spatial(mid, map.value);
      if (with_grad) {
        const auto [dmid, dmap] = scale_spatial_backward(mid, map.value, coeff);
        map.grad += dmap;
        const auto [dx, dcw] = scale_channels_backward(x.value, cw.value, dmid);
        x.grad += dx;
        cw.grad += dcw;
      }
      return probe(y, coeff);
    };
    return grad_check(f, {&x, &cw, &map}, run.check_options(0, 0));
  });
}

void blocks(Runner& run) {
  run.run("asdic", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 10);
    ParamStore<double> st;
    const auto a = Asdic<double>::make(st, "a", Partition::kFeatureWeighting, "fw", 2, rng);
    randomize(st, rng);
    auto s = random_param({1, 2, 6, 6}, rng);
    const auto coeff = random_tensor({1, 2, 6, 6}, rng);
    auto f = [&](bool with_grad) {
      typename Asdic<double>::Tape tape;
      const auto y = a.forward(st, s.value, &tape);
      if (with_grad) s.grad += a.backward(st, tape, coeff);
      return probe(y, coeff);
    };
    auto params = store_params(st);
    params.push_back(&s);
    return grad_check(f, params, run.check_options(0, 0));
  });

  run.run("channel_refine", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 20);
    ParamStore<double> st;
    const auto cr = ChannelRefine<double>::make(st, "c", Partition::kFeatureWeighting, "fw", 4, 3, 3, 3, rng);
    randomize(st, rng);
    auto c = random_param({2, 4, 6, 6}, rng);
    auto nu = random_param({2, 3, 3, 3}, rng);
    const auto coeff = random_tensor({2, 4, 6, 6}, rng);
    auto f = [&](bool with_grad) {
      typename ChannelRefine<double>::Tape tape;
      const auto [y, t] = cr.forward(st, c.value, nu.value, &tape);
      if (with_grad) {
        const auto [dc, dnu] = cr.backward(st, tape, coeff);
        c.grad += dc;
        nu.grad += dnu;
      }
      return probe(y, coeff);
    };
    auto params = store_params(st);
    params.push_back(&c);
    params.push_back(&nu);
    return grad_check(f, params, run.check_options(0, 0));
  });

  run.run("spatial_refine", [&](int seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 30);
    ParamStore<double> st;
    const auto sr = SpatialRefine<double>::make(st, "s", Partition::kFeatureWeighting, "fw", 4, 8, rng);
    randomize(st, rng);
    auto c = random_param({1, 4, 8, 8}, rng);
    auto s = random_param({1, 8, 4, 4}, rng);
    const auto coeff = random_tensor({1, 4, 8, 8}, rng);
    auto f = [&](bool with_grad) {
      typename SpatialRefine<double>::Tape tape;
      const auto [y, q] = sr.forward(st, c.value, s.value, &tape);
      if (with_grad) {
        const auto [dc, ds] = sr.backward(st, tape, coeff);
        c.grad += dc;
        s.grad += ds;
      }
      return probe(y, coeff);
    };
    auto params = store_params(st);
    params.push_back(&c);
    params.push_back(&s);
    return grad_check(f, params, run.check_options(0, 0));
  });

  for (bool use_asdic : {true, false}) {
    run.run(use_asdic ? "fw_block.asdic" : "fw_block.plain", [&](int seed) {
      Rng rng(static_cast<std::uint64_t>(seed) + 70);
      ParamStore<double> st;
      const auto fw = FwBlock<double>::make(st, "fw", {4, 8, 4, 4, use_asdic}, rng);
      randomize_biases(st, rng);
      auto c = random_param({1, 4, 8, 8}, rng);
      auto s = random_param({1, 8, 4, 4}, rng);
      const auto coeff = random_tensor({1, 4, 8, 8}, rng);
      auto f = [&](bool with_grad) {
        typename FwBlock<double>::Tape tape;
        const auto r = fw.forward(st, c.value, s.value, &tape);
        if (with_grad) {
          const auto [dc, ds] = fw.backward(st, tape, coeff);
          c.grad += dc;
          s.grad += ds;
        }
        return probe(r.output, coeff);
      };
      auto params = store_params(st);
      params.push_back(&c);
      params.push_back(&s);
      return grad_check(f, params, run.check_options(0, 0));
    });
  }
}

void network(Runner& run, std::size_t coords) {
  NetworkConfig cfg = NetworkConfig::scaled(4, 32);
  cfg.enable_aux = true;
  cfg.enable_fw = true;
  cfg.enable_asdic = true;
  run.run("network.tiny_all_toggles", [&](int seed) {
    auto net = Network<double>::build(cfg, static_cast<std::uint64_t>(seed));
    Rng rng(static_cast<std::uint64_t>(seed) + 1000);
    const auto x = random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0);
    const auto y = random_mask({1, 1, 32, 32}, rng, 0.3);
    const LossConfig lc;
    auto f = [&](bool with_grad) {
      if (!with_grad) return total_loss(net.forward(x), y, lc).total;
      typename Network<double>::Tape tape;
      const auto out = net.forward_train(x, tape);
      const auto loss = total_loss(out, y, lc);
      net.backward(tape, loss);
      return loss.total;
    };
    return grad_check(f, store_params(net.store()), run.check_options(coords, static_cast<std::uint64_t>(seed)));
  });
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite(const SuiteOptions& options,
                                           const std::function<void(const SuiteEntry&)>& progress) {
  if (options.seeds <= 0) throw ConfigError("gradient suite: seeds must be positive");
  if (!(options.step > 0.0)) throw ConfigError("gradient suite: step must be positive");
  Runner run(options, progress);
  primitives(run);
  blocks(run);
  if (options.include_network) network(run, options.network_coords);
  return run.take();
}

}  // namespace cdnet
