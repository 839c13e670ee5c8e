#include "cdnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "cdnet/cdt_io.hpp"
#include "cdnet/pipeline.hpp"

namespace cdnet {

namespace fs = std::filesystem;

template <typename T>
Tensor<T> load_image(const fs::path& path) {
  const NdArray a = load_cdt(path);
  if (a.dtype == DType::kU8) throw IoError(path.string() + ": image must be f32 or f64");
  Tensor<T> t = tensor_from_cdt<T>(a);
  if (t.shape().n != 1) throw ShapeError(path.string() + ": expected one image, found batch " + t.shape().str());
  if (!t.all_finite()) throw NumericError(path.string() + ": image contains non-finite values");
  return t;
}

template <typename T>
Tensor<T> load_mask_tensor(const fs::path& path) {
  const LabelVolume m = read_mask(path, MaskKind::kBinary);
  if (m.depth != 1) throw ShapeError(path.string() + ": expected a single mask slice");
  Tensor<T> t(1, 1, m.height, m.width);
  for (std::size_t i = 0; i < m.labels.size(); ++i) t[i] = static_cast<T>(m.labels[i]);
  return t;
}

template <typename T>
std::vector<NamedSample<T>> load_dataset(const fs::path& dir) {
  const fs::path images = dir / "images";
  const fs::path masks = dir / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw IoError(dir.string() + ": expected images/ and masks/ subdirectories");
  }
  std::map<std::string, fs::path> mask_by_stem;
  for (const auto& e : fs::directory_iterator(masks)) {
    if (e.is_regular_file()) mask_by_stem[e.path().stem().string()] = e.path();
  }
  std::map<std::string, fs::path> image_by_stem;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.is_regular_file() && e.path().extension() == ".cdt") image_by_stem[e.path().stem().string()] = e.path();
  }
  if (image_by_stem.empty()) throw IoError(images.string() + ": no .cdt images");
  std::vector<NamedSample<T>> out;
  for (const auto& [stem, ipath] : image_by_stem) {
    const auto m = mask_by_stem.find(stem);
    if (m == mask_by_stem.end()) throw IoError(ipath.string() + ": no matching mask in " + masks.string());
    NamedSample<T> s{stem, {load_image<T>(ipath), load_mask_tensor<T>(m->second)}};
    const Shape is = s.sample.image.shape();
    const Shape ms = s.sample.mask.shape();
    if (is.h != ms.h || is.w != ms.w) {
      throw ShapeError(stem + ": image " + is.str() + " and mask " + ms.str() + " differ in size");
    }
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
void save_dataset(const fs::path& dir, const std::vector<NamedSample<T>>& samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (const auto& s : samples) {
    save_cdt(dir / "images" / (s.stem + ".cdt"), tensor_to_cdt(s.sample.image));
    const Shape ms = s.sample.mask.shape();
    LabelVolume m{1, ms.h, ms.w, std::vector<std::uint8_t>(ms.h * ms.w)};
    for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = s.sample.mask[i] > T(0.5) ? 1 : 0;
    write_mask(dir / "masks" / (s.stem + ".cdt"), m, MaskKind::kBinary);
  }
}

template <typename T>
std::vector<Sample<T>> make_blob_dataset(const BlobOptions& o) {
  if (o.count == 0 || o.size < 8 || o.channels == 0 || o.max_blobs == 0) {
    throw ConfigError("blob dataset: count, channels and max_blobs must be positive and size >= 8");
  }
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.noise);
  const double n = static_cast<double>(o.size);
  std::vector<Sample<T>> out;
  for (std::size_t k = 0; k < o.count; ++k) {
    Sample<T> s{Tensor<T>(1, o.channels, o.size, o.size), Tensor<T>(1, 1, o.size, o.size)};
    const std::size_t blobs = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(o.max_blobs)) % o.max_blobs;
    struct Ellipse {
      double cy, cx, ry, rx, angle;
    };
    std::vector<Ellipse> es;
    for (std::size_t b = 0; b < blobs; ++b) {
      es.push_back({n * (0.2 + 0.6 * unit(rng)), n * (0.2 + 0.6 * unit(rng)), n * (0.06 + 0.12 * unit(rng)),
                    n * (0.06 + 0.12 * unit(rng)), 3.14159265358979 * unit(rng)});
    }
    const double fy = 2.0 + 4.0 * unit(rng);
    const double fx = 2.0 + 4.0 * unit(rng);
    for (std::size_t y = 0; y < o.size; ++y) {
      for (std::size_t x = 0; x < o.size; ++x) {
        bool inside = false;
        for (const auto& e : es) {
          const double dy = static_cast<double>(y) - e.cy;
          const double dx = static_cast<double>(x) - e.cx;
          const double u = (dx * std::cos(e.angle) + dy * std::sin(e.angle)) / e.rx;
          const double v = (-dx * std::sin(e.angle) + dy * std::cos(e.angle)) / e.ry;
          inside = inside || (u * u + v * v <= 1.0);
        }
        s.mask.at(0, 0, y, x) = inside ? T(1) : T(0);
        const double texture = 0.08 * std::sin(fy * static_cast<double>(y) / n * 6.28318530718) *
                               std::cos(fx * static_cast<double>(x) / n * 6.28318530718);
        for (std::size_t c = 0; c < o.channels; ++c) {
          const double v = (inside ? 0.7 : 0.3) + texture + noise(rng);
          s.image.at(0, c, y, x) = static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

#define CDNET_INSTANTIATE_DATASET(T)                                                      \
  template Tensor<T> load_image(const fs::path&);                                         \
  template Tensor<T> load_mask_tensor(const fs::path&);                                   \
  template std::vector<NamedSample<T>> load_dataset(const fs::path&);                     \
  template void save_dataset(const fs::path&, const std::vector<NamedSample<T>>&);        \
  template std::vector<Sample<T>> make_blob_dataset(const BlobOptions&);

CDNET_INSTANTIATE_DATASET(float)
CDNET_INSTANTIATE_DATASET(double)

#undef CDNET_INSTANTIATE_DATASET

}  // namespace cdnet
