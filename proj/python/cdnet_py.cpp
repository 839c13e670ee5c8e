// Python bindings. Arrays cross the boundary as C-contiguous NumPy arrays; images are
// N x C x H x W float32.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cdnet/cdt_io.hpp"
#include "cdnet/dataset.hpp"
#include "cdnet/errors.hpp"
#include "cdnet/gradient_suite.hpp"
#include "cdnet/losses.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/network.hpp"
#include "cdnet/pipeline.hpp"
#include "cdnet/trainer.hpp"

namespace py = pybind11;
using namespace cdnet;

namespace {

template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

// 2-D -> 1 x 1 x H x W, 3-D -> 1 x C x H x W, 4-D unchanged.
Tensor<float> to_tensor(const CArray<float>& a) {
  Shape s;
  switch (a.ndim()) {
    case 2: s = {1, 1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))}; break;
    case 3:
      s = {1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2))};
      break;
    case 4:
      s = {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
      break;
    default: throw ShapeError("expected a 2-D, 3-D or 4-D array, got " + std::to_string(a.ndim()) + "-D");
  }
  return Tensor<float>(s, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor<float>& t) {
  const Shape s = t.shape();
  py::array_t<float> out({s.n, s.c, s.h, s.w});
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vec(const CArray<double>& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

LabelVolume to_volume(const CArray<std::uint8_t>& a) {
  if (a.ndim() == 2)
    return {1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
            std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
  if (a.ndim() == 3)
    return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
            static_cast<std::size_t>(a.shape(2)), std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
  throw ShapeError("expected a 2-D or 3-D uint8 mask, got " + std::to_string(a.ndim()) + "-D");
}

std::vector<Sample<float>> to_samples(const CArray<float>& images, const CArray<float>& masks) {
  const Tensor<float> im = to_tensor(images);
  const Tensor<float> mk = to_tensor(masks);
  const Shape is = im.shape(), ms = mk.shape();
  if (is.n != ms.n || ms.c != 1 || is.h != ms.h || is.w != ms.w)
    throw ShapeError("images " + is.str() + " and masks " + ms.str() + " do not pair up (masks need one channel)");
  std::vector<Sample<float>> out;
  for (std::size_t n = 0; n < is.n; ++n) {
    Tensor<float> img(1, is.c, is.h, is.w), mask(1, 1, is.h, is.w);
    std::copy_n(im.data() + n * img.size(), img.size(), img.data());
    std::copy_n(mk.data() + n * mask.size(), mask.size(), mask.data());
    out.push_back({std::move(img), std::move(mask)});
  }
  return out;
}

py::tuple shape_tuple(const Shape& s) { return py::make_tuple(s.n, s.c, s.h, s.w); }

py::list trace_list(const ShapeTrace& trace) {
  py::list out;
  for (const auto& r : trace) out.append(py::make_tuple(r.label, shape_tuple(r.shape)));
  return out;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["dsc"] = m.dsc;
  d["iou"] = m.iou;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["spe"] = m.spe;
  d["roc_auc"] = m.roc_auc ? py::cast(*m.roc_auc) : py::none();
  d["pr_auc"] = m.pr_auc ? py::cast(*m.pr_auc) : py::none();
  return d;
}

py::dict epoch_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["total_loss"] = r.total_loss;
  d["output_loss"] = r.output_loss;
  d["supervision_loss"] = r.supervision_loss;
  d["lr"] = r.lr;
  return d;
}

std::vector<ScoredLabel> scored(const CArray<double>& scores, const CArray<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  std::vector<ScoredLabel> out(static_cast<std::size_t>(scores.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {scores.data()[i], labels.data()[i] != 0};
  return out;
}

template <typename F>
py::tuple loss_result(F&& f) {
  const LossResult<double> r = f();
  return py::make_tuple(r.value, to_array(r.grad));
}

}  // namespace

PYBIND11_MODULE(cdnet, m) {
  m.doc() = "Lesion segmentation network with assembled dilated convolutions and feature weighting";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<UndefinedError>(m, "UndefinedError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // ---- network ----------------------------------------------------------------------------
  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def_static("full_scale", &NetworkConfig::full_scale)
      .def_static("scaled", &NetworkConfig::scaled, py::arg("base_filters"), py::arg("size"))
      .def_static("vanilla_unet", &NetworkConfig::vanilla_unet, py::arg("base_filters"), py::arg("size"))
      .def_readwrite("levels", &NetworkConfig::levels)
      .def_readwrite("base_filters", &NetworkConfig::base_filters)
      .def_readwrite("input_h", &NetworkConfig::input_h)
      .def_readwrite("input_w", &NetworkConfig::input_w)
      .def_readwrite("input_channels", &NetworkConfig::input_channels)
      .def_readwrite("enable_aux", &NetworkConfig::enable_aux)
      .def_readwrite("enable_fw", &NetworkConfig::enable_fw)
      .def_readwrite("enable_asdic", &NetworkConfig::enable_asdic)
      .def_readwrite("gn_groups", &NetworkConfig::gn_groups)
      .def_readwrite("aux_per_branch_loss", &NetworkConfig::aux_per_branch_loss)
      .def("validate", &NetworkConfig::validate)
      .def("canonical", &NetworkConfig::canonical)
      .def("digest", &NetworkConfig::digest)
      .def("__repr__", [](const NetworkConfig& c) { return "NetworkConfig(" + c.canonical() + ")"; });

  m.def(
      "shape_plan",
      [](const NetworkConfig& c, std::size_t batch) { return trace_list(Network<float>::shape_plan(c, batch)); },
      py::arg("config"), py::arg("batch") = 1, "Labelled intermediate tensor shapes without allocating the network");

  py::class_<Network<float>>(m, "Network")
      .def_static("build", &Network<float>::build, py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "from_weights",
          [](const std::string& path) {
            auto net = Network<float>::build(read_weights_config(path), 0);
            load_weights(net, path);
            return net;
          },
          py::arg("path"))
      .def_property_readonly("config", &Network<float>::config)
      .def_property_readonly("parameter_count", [](const Network<float>& n) { return n.store().scalar_count(); })
      .def(
          "forward",
          [](const Network<float>& n, const CArray<float>& image) {
            const auto out = n.forward(to_tensor(image));
            py::dict d;
            d["main"] = to_array(out.main);
            d["aux"] = out.aux ? py::object(to_array(*out.aux)) : py::none();
            py::list branches;
            for (const auto& b : out.aux_branches) branches.append(to_array(b));
            d["aux_branches"] = branches;
            return d;
          },
          py::arg("image"))
      .def(
          "shape_trace",
          [](const Network<float>& n, const CArray<float>& image) {
            ShapeTrace trace;
            n.forward(to_tensor(image), &trace);
            return trace_list(trace);
          },
          py::arg("image"))
      .def("save", [](const Network<float>& n, const std::string& path) { save_weights(n, path); }, py::arg("path"))
      .def("load", [](Network<float>& n, const std::string& path) { load_weights(n, path); }, py::arg("path"));

  // ---- losses -----------------------------------------------------------------------------
  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &LossConfig::alpha)
      .def_readwrite("beta", &LossConfig::beta)
      .def_readwrite("gamma", &LossConfig::gamma)
      .def_readwrite("epsilon", &LossConfig::epsilon)
      .def_readwrite("focal_gamma", &LossConfig::focal_gamma)
      .def_readwrite("include_background", &LossConfig::include_background)
      .def_property(
          "kind", [](const LossConfig& c) { return std::string(loss_kind_name(c.kind)); },
          [](LossConfig& c, const std::string& s) { c.kind = loss_kind_from_name(s); })
      .def("validate", &LossConfig::validate);

  m.def(
      "dice_loss",
      [](const CArray<double>& p, const CArray<double>& y, double eps) {
        return loss_result([&] { return dice_loss<double>(to_vec(p), to_vec(y), eps); });
      },
      py::arg("pred"), py::arg("truth"), py::arg("epsilon") = 1e-6, "Returns (value, d value / d pred)");
  m.def(
      "tversky_loss",
      [](const CArray<double>& p, const CArray<double>& y, const LossConfig& c) {
        return loss_result([&] { return tversky_loss<double>(to_vec(p), to_vec(y), c); });
      },
      py::arg("pred"), py::arg("truth"), py::arg("config") = LossConfig{});
  m.def(
      "focal_tversky_loss",
      [](const CArray<double>& p, const CArray<double>& y, const LossConfig& c) {
        return loss_result([&] { return focal_tversky_loss<double>(to_vec(p), to_vec(y), c); });
      },
      py::arg("pred"), py::arg("truth"), py::arg("config") = LossConfig{});
  m.def(
      "combined_loss",
      [](const CArray<double>& p, const CArray<double>& y, const LossConfig& c) {
        return loss_result([&] { return combined_loss<double>(to_vec(p), to_vec(y), c); });
      },
      py::arg("pred"), py::arg("truth"), py::arg("config") = LossConfig{});

  // ---- metrics ----------------------------------------------------------------------------
  m.def(
      "confusion_counts",
      [](const CArray<double>& pred, const CArray<double>& truth, double threshold) {
        if (pred.size() != truth.size()) throw ShapeError("pred and truth differ in size");
        const auto c = confusion_counts<double, double>(to_vec(pred), to_vec(truth), threshold);
        py::dict d;
        d["tp"] = c.tp;
        d["fp"] = c.fp;
        d["fn"] = c.fn;
        d["tn"] = c.tn;
        return d;
      },
      py::arg("pred"), py::arg("truth"), py::arg("threshold") = kDefaultThreshold);
  m.def(
      "segmentation_metrics",
      [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
        return metrics_dict(segmentation_metrics(ConfusionCounts{tp, fp, fn, tn}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));
  m.def(
      "roc_auc", [](const CArray<double>& s, const CArray<std::uint8_t>& l) { return roc_auc(scored(s, l)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "pr_auc", [](const CArray<double>& s, const CArray<std::uint8_t>& l) { return pr_auc(scored(s, l)); },
      py::arg("scores"), py::arg("labels"));

  // ---- training ---------------------------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr_phase1", &TrainConfig::lr_phase1)
      .def_readwrite("phase1_epochs", &TrainConfig::phase1_epochs)
      .def_readwrite("lr_phase2", &TrainConfig::lr_phase2)
      .def_readwrite("total_epochs", &TrainConfig::total_epochs)
      .def_readwrite("plateau_patience", &TrainConfig::plateau_patience)
      .def_readwrite("plateau_factor", &TrainConfig::plateau_factor)
      .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience)
      .def_readwrite("adam_beta1", &TrainConfig::adam_beta1)
      .def_readwrite("adam_beta2", &TrainConfig::adam_beta2)
      .def_readwrite("adam_eps", &TrainConfig::adam_eps)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def("validate", &TrainConfig::validate);

  m.def(
      "lr_trace",
      [](const TrainConfig& cfg, const std::vector<double>& losses) {
        ScheduleState s;
        std::vector<double> out;
        for (std::size_t e = 1; e <= losses.size() + 1; ++e)
          out.push_back(lr_schedule(cfg, s, e, e == 1 ? 0.0 : losses[e - 2]));
        return out;
      },
      py::arg("config"), py::arg("losses"),
      "Learning rate of epochs 1..len(losses)+1 given the monitored loss of each finished epoch");

  m.def(
      "train",
      [](Network<float>& net, const CArray<float>& images, const CArray<float>& masks, const TrainConfig& cfg,
         const LossConfig& loss, const std::optional<std::function<py::object(py::dict)>>& callback) {
        const auto data = to_samples(images, masks);
        EpochCallback cb;
        if (callback) {
          cb = [&](const EpochRecord& r) {
            const py::object keep = (*callback)(epoch_dict(r));
            return keep.is_none() || keep.cast<bool>();
          };
        }
        const auto history = train(net, data, cfg, loss, cb);
        py::list out;
        for (const auto& r : history.epochs) out.append(epoch_dict(r));
        return out;
      },
      py::arg("network"), py::arg("images"), py::arg("masks"), py::arg("config") = TrainConfig{},
      py::arg("loss") = LossConfig{}, py::arg("callback") = py::none(),
      "Trains in place; `callback(epoch_record)` returning False stops early. Returns the epoch records.");

  m.def(
      "evaluate",
      [](const Network<float>& net, const CArray<float>& images, const CArray<float>& masks, double threshold,
         bool micro) {
        EvalOptions o;
        o.threshold = threshold;
        o.micro = micro;
        const auto r = evaluate(net, to_samples(images, masks), o);
        return py::make_tuple(metrics_dict(r.mean), format_report(r));
      },
      py::arg("network"), py::arg("images"), py::arg("masks"), py::arg("threshold") = kDefaultThreshold,
      py::arg("micro") = false, "Returns (mean metrics dict, formatted report)");

  m.def(
      "make_blob_dataset",
      [](std::size_t count, std::size_t size, std::uint64_t seed, std::size_t max_blobs, double noise) {
        BlobOptions o;
        o.count = count;
        o.size = size;
        o.seed = seed;
        o.max_blobs = max_blobs;
        o.noise = noise;
        const auto samples = make_blob_dataset<float>(o);
        py::array_t<float> images({count, std::size_t{1}, size, size});
        py::array_t<float> masks({count, std::size_t{1}, size, size});
        for (std::size_t n = 0; n < count; ++n) {
          std::copy(samples[n].image.vec().begin(), samples[n].image.vec().end(),
                    images.mutable_data() + n * size * size);
          std::copy(samples[n].mask.vec().begin(), samples[n].mask.vec().end(), masks.mutable_data() + n * size * size);
        }
        return py::make_tuple(images, masks);
      },
      py::arg("count") = 8, py::arg("size") = 64, py::arg("seed") = 0, py::arg("max_blobs") = 3,
      py::arg("noise") = 0.05, "Synthetic (images, masks), each count x 1 x size x size float32");

  m.def(
      "save_dataset",
      [](const std::string& dir, const CArray<float>& images, const CArray<float>& masks) {
        std::vector<NamedSample<float>> named;
        std::size_t k = 0;
        for (auto& s : to_samples(images, masks)) {
          char stem[32];
          std::snprintf(stem, sizeof stem, "sample_%04zu", k++);
          named.push_back({stem, std::move(s)});
        }
        save_dataset(dir, named);
      },
      py::arg("dir"), py::arg("images"), py::arg("masks"), "Writes the images/ and masks/ layout read by `cdnet train`");

  // ---- pipeline ---------------------------------------------------------------------------
  m.def(
      "preprocess_slice",
      [](const CArray<double>& raw, std::size_t size, double hu_min, double hu_max) {
        if (raw.ndim() != 2) throw ShapeError("expected a 2-D HU slice");
        const auto rec = preprocess_slice<float>(to_vec(raw), static_cast<std::size_t>(raw.shape(0)),
                                                 static_cast<std::size_t>(raw.shape(1)), size, size,
                                                 HuWindow{hu_min, hu_max});
        py::array_t<float> out({size, size});
        std::copy(rec.preprocessed.vec().begin(), rec.preprocessed.vec().end(), out.mutable_data());
        return out;
      },
      py::arg("raw_hu"), py::arg("size") = 512, py::arg("hu_min") = -1000.0, py::arg("hu_max") = 170.0);

  m.def(
      "grade_severity",
      [](const CArray<std::uint8_t>& lesion, const CArray<std::uint8_t>& lungs) {
        const LabelVolume les = to_volume(lesion), lun = to_volume(lungs);
        les.validate(MaskKind::kBinary);
        lun.validate(MaskKind::kLung);
        const auto r = grade_severity(les, lun);
        py::dict d;
        d["left_pct"] = r.left_pct;
        d["right_pct"] = r.right_pct;
        d["grade"] = std::string(grade_name(r.grade));
        return d;
      },
      py::arg("lesion"), py::arg("lungs"), "Lung labels: 0 background, 1 right, 2 left");

  // ---- CDT1 files -------------------------------------------------------------------------
  m.def(
      "save_cdt",
      [](const std::string& path, const py::array& a) {
        std::vector<std::uint32_t> dims(a.shape(), a.shape() + a.ndim());
        if (py::isinstance<py::array_t<std::uint8_t>>(a)) {
          const auto c = CArray<std::uint8_t>::ensure(a);
          save_cdt(path, NdArray::from_u8(dims, {c.data(), c.data() + c.size()}));
        } else if (py::isinstance<py::array_t<double>>(a)) {
          const auto c = CArray<double>::ensure(a);
          save_cdt(path, NdArray::from_f64(dims, {c.data(), c.data() + c.size()}));
        } else {
          const auto c = CArray<float>::ensure(a);
          save_cdt(path, NdArray::from_f32(dims, {c.data(), c.data() + c.size()}));
        }
      },
      py::arg("path"), py::arg("array"), "uint8 and float64 keep their type; anything else is stored as float32");
  m.def(
      "load_cdt",
      [](const std::string& path) -> py::array {
        const NdArray a = load_cdt(path);
        std::vector<py::ssize_t> shape(a.dims.begin(), a.dims.end());
        if (a.dtype == DType::kU8) {
          const auto v = a.to_u8();
          py::array_t<std::uint8_t> out(shape);
          std::copy(v.begin(), v.end(), out.mutable_data());
          return out;
        }
        const auto v = a.to_f64();
        if (a.dtype == DType::kF64) {
          py::array_t<double> out(shape);
          std::copy(v.begin(), v.end(), out.mutable_data());
          return out;
        }
        py::array_t<float> out(shape);
        std::transform(v.begin(), v.end(), out.mutable_data(), [](double x) { return static_cast<float>(x); });
        return out;
      },
      py::arg("path"));

  // ---- gradient verification -----------------------------------------------------------------
  m.def(
      "gradient_suite",
      [](int seeds, bool include_network) {
        SuiteOptions o;
        o.seeds = seeds;
        o.include_network = include_network;
        py::list out;
        for (const auto& e : run_gradient_suite(o)) {
          py::dict d;
          d["name"] = e.name;
          d["seeds"] = e.seeds;
          d["coords"] = e.coords;
          d["max_rel_error"] = e.max_rel_error;
          d["unconverged"] = e.unconverged;
          d["violations"] = e.violations;
          out.append(d);
        }
        return out;
      },
      py::arg("seeds") = 20, py::arg("include_network") = true);
}
