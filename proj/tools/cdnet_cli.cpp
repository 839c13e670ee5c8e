// cdnet command-line tool: gradcheck | train | infer | eval | grade | preprocess.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdnet/cdt_io.hpp"
#include "cdnet/config_io.hpp"
#include "cdnet/dataset.hpp"
#include "cdnet/errors.hpp"
#include "cdnet/gradient_suite.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/network.hpp"
#include "cdnet/pipeline.hpp"
#include "cdnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cdnet;

namespace {

struct GradcheckArgs {
  int seeds = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool no_network = false;
  bool strict = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  SuiteOptions opts;
  opts.seeds = a.seeds;
  opts.step = a.step;
  opts.tolerance = a.tolerance;
  opts.include_network = !a.no_network;
  std::size_t strict_fail = 0, violations = 0;
  std::printf("%-30s %12s %8s %6s %11s %10s\n", "entry", "max_rel", "coords", "seeds", "unconverged", "violations");
  run_gradient_suite(opts, [&](const SuiteEntry& e) {
    std::printf("%-30s %12.3e %8zu %6d %11zu %10zu\n", e.name.c_str(), e.max_rel_error, e.coords, e.seeds,
                e.unconverged, e.violations);
    std::fflush(stdout);
    strict_fail += !e.strict_pass(a.tolerance);
    violations += e.violations;
  });
  std::printf("strict rule: %zu entries above %.1e; convergence-aware rule: %zu violations\n", strict_fail,
              a.tolerance, violations);
  const bool ok = a.strict ? strict_fail == 0 : violations == 0;
  if (!ok) std::fprintf(stderr, "cdnet: gradcheck failed under the %s rule\n", a.strict ? "strict" : "convergence-aware");
  return ok ? 0 : 1;
}

struct TrainArgs {
  std::string config, data_dir, out;
};

int run_train(const TrainArgs& a) {
  const RunConfig rc = load_run_config(a.config);
  std::vector<Sample<float>> data;
  for (auto& s : load_dataset<float>(a.data_dir)) data.push_back(std::move(s.sample));
  auto net = Network<float>::build(rc.network, rc.init_seed);
  fs::create_directories(a.out);
  const auto history = train(net, data, rc.train, rc.loss, [](const EpochRecord& r) {
    std::printf("epoch %zu loss %.6f (output %.6f, supervision %.6f) lr %.3g\n", r.epoch, r.total_loss,
                r.output_loss, r.supervision_loss, r.lr);
    std::fflush(stdout);
    return true;
  });
  save_weights(net, fs::path(a.out) / "weights.cdnw");
  write_history_csv(fs::path(a.out) / "history.csv", history);
  std::FILE* f = std::fopen((fs::path(a.out) / "run_config.txt").c_str(), "w");
  if (!f) throw IoError(a.out + ": cannot write run_config.txt");
  const std::string text = format_run_config(rc);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  std::printf("trained %zu epochs%s; weights in %s\n", history.epochs.size(),
              history.early_stopped ? " (early stop)" : "", (fs::path(a.out) / "weights.cdnw").c_str());
  return 0;
}

struct InferArgs {
  std::string weights, input, output, probabilities;
  double threshold = kDefaultThreshold;
};

int run_infer(const InferArgs& a) {
  auto net = Network<float>::build(read_weights_config(a.weights), 0);
  load_weights(net, a.weights);
  const auto out = net.forward(load_image<float>(a.input));
  const Shape s = out.main.shape();
  LabelVolume mask{1, s.h, s.w, std::vector<std::uint8_t>(s.h * s.w)};
  std::size_t positive = 0;
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    mask.labels[i] = out.main[i] >= a.threshold ? 1 : 0;
    positive += mask.labels[i];
  }
  write_mask(a.output, mask, MaskKind::kBinary);
  if (!a.probabilities.empty()) save_cdt(a.probabilities, tensor_to_cdt(out.main));
  std::printf("%zu of %zu pixels positive at threshold %.3g\n", positive, mask.labels.size(), a.threshold);
  return 0;
}

struct EvalArgs {
  std::string predictions, truth;
  double threshold = kDefaultThreshold;
  bool micro = false;
};

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().stem().string()] = e.path();
  return out;
}

int run_eval(const EvalArgs& a) {
  const auto preds = files_by_stem(a.predictions);
  const auto truths = files_by_stem(a.truth);
  if (preds.empty()) throw IoError(a.predictions + ": no prediction files");
  std::vector<Tensor<float>> p, t;
  for (const auto& [stem, path] : preds) {
    const auto it = truths.find(stem);
    if (it == truths.end()) throw IoError(path.string() + ": no truth mask with stem " + stem);
    p.push_back(tensor_from_cdt<float>(load_cdt(path)));
    t.push_back(load_mask_tensor<float>(it->second));
    if (p.back().size() != t.back().size())
      throw ShapeError(stem + ": prediction " + p.back().shape().str() + " and truth " + t.back().shape().str() +
                       " differ in size");
  }
  EvalOptions opts;
  opts.threshold = a.threshold;
  opts.micro = a.micro;
  std::printf("%s", format_report(evaluate_predictions(p, t, opts)).c_str());
  return 0;
}

struct GradeArgs {
  std::string lesion, lungs;
};

int run_grade(const GradeArgs& a) {
  const auto r = grade_severity(read_mask(a.lesion, MaskKind::kBinary), read_mask(a.lungs, MaskKind::kLung));
  std::printf("%s\n", grade_name(r.grade));
  std::printf("left lung %.2f%% affected, right lung %.2f%% affected\n", r.left_pct, r.right_pct);
  return 0;
}

struct PreprocessArgs {
  std::string input, output;
  std::size_t size = 512;
  double hu_min = -1000.0;
  double hu_max = 170.0;
};

// Accepts H x W or D x H x W raw HU; writes D x 1 x size x size float32.
int run_preprocess(const PreprocessArgs& a) {
  const NdArray raw = load_cdt(a.input);
  if (raw.dims.size() != 2 && raw.dims.size() != 3)
    throw ShapeError(a.input + ": expected H x W or D x H x W raw HU, found " + std::to_string(raw.dims.size()) +
                     " dimensions");
  const std::size_t depth = raw.dims.size() == 3 ? raw.dims[0] : 1;
  const std::size_t h = raw.dims[raw.dims.size() - 2];
  const std::size_t w = raw.dims.back();
  const std::vector<double> hu = raw.to_f64();
  const HuWindow window{a.hu_min, a.hu_max};
  Tensor<float> out(depth, 1, a.size, a.size);
  for (std::size_t d = 0; d < depth; ++d) {
    const std::span<const double> slice(hu.data() + d * h * w, h * w);
    const auto rec = preprocess_slice<float>(slice, h, w, a.size, a.size, window);
    std::copy(rec.preprocessed.vec().begin(), rec.preprocessed.vec().end(), out.plane(d, 0));
  }
  save_cdt(a.output, tensor_to_cdt(out));
  std::printf("%zu slice(s) %zux%zu -> %zux%zu\n", depth, h, w, a.size, a.size);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cdnet: lesion segmentation network tools"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite over every op, block and the tiny network");
  gc->add_option("--seeds", ga.seeds, "Seeds per entry")->check(CLI::PositiveNumber);
  gc->add_option("--step", ga.step, "Central-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", ga.tolerance, "Relative tolerance")->check(CLI::PositiveNumber);
  gc->add_flag("--no-network", ga.no_network, "Skip the full-network entry");
  gc->add_flag("--strict", ga.strict, "Fail on any coordinate above tolerance, including unconverged ones");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train on a sample directory");
  tr->add_option("--config", ta.config, "Run configuration (key = value)")->required()->check(CLI::ExistingFile);
  tr->add_option("--data-dir", ta.data_dir, "Directory with images/ and masks/")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", ta.out, "Output directory for weights, history and config")->required();

  InferArgs ia;
  auto* in = app.add_subcommand("infer", "Segment one image");
  in->add_option("--weights", ia.weights, "Weights file")->required()->check(CLI::ExistingFile);
  in->add_option("--input", ia.input, "Image (CDT1)")->required()->check(CLI::ExistingFile);
  in->add_option("--output", ia.output, "Binary mask (.pgm or u8 CDT1)")->required();
  in->add_option("--threshold", ia.threshold, "Probability threshold")->check(CLI::Range(0.0, 1.0));
  in->add_option("--probabilities", ia.probabilities, "Also write the probability map (CDT1)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score prediction maps against truth masks");
  ev->add_option("--predictions", ea.predictions, "Directory of <stem>.cdt prediction maps")->required();
  ev->add_option("--truth", ea.truth, "Directory of <stem>.cdt or <stem>.pgm truth masks")->required();
  ev->add_option("--threshold", ea.threshold, "Probability threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_flag("--micro", ea.micro, "Pool counts over all slices instead of averaging per slice");

  GradeArgs gr;
  auto* gd = app.add_subcommand("grade", "Severity grade from lesion and lung masks");
  gd->add_option("--lesion", gr.lesion, "Binary lesion mask (CDT1 D x H x W or PGM)")->required()->check(CLI::ExistingFile);
  gd->add_option("--lungs", gr.lungs, "Lung labels 0/1 right/2 left (CDT1 or PGM)")->required()->check(CLI::ExistingFile);

  PreprocessArgs pa;
  auto* pp = app.add_subcommand("preprocess", "Clip, normalize and resize raw HU slices");
  pp->add_option("--input", pa.input, "Raw HU (CDT1, H x W or D x H x W)")->required()->check(CLI::ExistingFile);
  pp->add_option("--output", pa.output, "Output CDT1 (D x 1 x size x size, float32)")->required();
  pp->add_option("--size", pa.size, "Target height and width")->check(CLI::PositiveNumber);
  pp->add_option("--hu-min", pa.hu_min, "Window floor in HU");
  pp->add_option("--hu-max", pa.hu_max, "Window ceiling in HU");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gc) return run_gradcheck(ga);
    if (*tr) return run_train(ta);
    if (*in) return run_infer(ia);
    if (*ev) return run_eval(ea);
    if (*gd) return run_grade(gr);
    if (*pp) return run_preprocess(pa);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cdnet: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
