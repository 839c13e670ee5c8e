#include "cdnet/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdnet/cdt_io.hpp"
#include "cdnet/ops.hpp"

namespace cdnet {

template <typename T>
SliceRecord<T> preprocess_slice(std::span<const double> raw_hu, std::size_t height, std::size_t width,
                                std::size_t target_h, std::size_t target_w, const HuWindow& window) {
  if (raw_hu.empty() || height == 0 || width == 0) throw ShapeError("preprocess: empty slice");
  if (raw_hu.size() != height * width) {
    throw ShapeError("preprocess: " + std::to_string(raw_hu.size()) + " values for a " +
                     std::to_string(height) + "x" + std::to_string(width) + " slice");
  }
  if (!(window.hi > window.lo)) throw ConfigError("preprocess: HU window must be ascending");
  if (target_h == 0 || target_w == 0) throw ConfigError("preprocess: target size must be positive");
  SliceRecord<T> rec;
  rec.raw.assign(raw_hu.begin(), raw_hu.end());
  rec.source_h = height;
  rec.source_w = width;
  Tensor<double> norm(1, 1, height, width);
  const double span = window.hi - window.lo;
  for (std::size_t i = 0; i < raw_hu.size(); ++i) {
    if (!std::isfinite(raw_hu[i])) {
      throw NumericError("preprocess: non-finite HU value at pixel " + std::to_string(i));
    }
    norm[i] = (std::clamp(raw_hu[i], window.lo, window.hi) - window.lo) / span;
  }
  Tensor<double> resized = resize_bilinear(norm, target_h, target_w);
  for (auto& v : resized.vec()) v = std::clamp(v, 0.0, 1.0);
  rec.preprocessed = resized.cast<T>();
  return rec;
}

template SliceRecord<float> preprocess_slice(std::span<const double>, std::size_t, std::size_t,
                                             std::size_t, std::size_t, const HuWindow&);
template SliceRecord<double> preprocess_slice(std::span<const double>, std::size_t, std::size_t,
                                              std::size_t, std::size_t, const HuWindow&);

// ---- masks -----------------------------------------------------------------

namespace {

std::uint8_t max_label(MaskKind k) { return k == MaskKind::kBinary ? 1 : 2; }

void validate_labels(const std::vector<std::uint8_t>& labels, MaskKind kind, std::size_t byte_base,
                     const std::string& where) {
  const std::uint8_t top = max_label(kind);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > top) {
      throw IoError(where + "label " + std::to_string(labels[i]) + " outside {0.." +
                    std::to_string(top) + "} at pixel " + std::to_string(i) + " (byte offset " +
                    std::to_string(byte_base + i) + ")");
    }
  }
}

bool is_pgm(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm";
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

LabelVolume read_pgm(const std::filesystem::path& path, MaskKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  if (pgm_token(in) != "P5") throw IoError(path.string() + ": bad magic at byte offset 0 (expected P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(in));
    h = std::stoul(pgm_token(in));
    maxval = std::stoul(pgm_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (maxval == 0 || maxval > 255) throw IoError(path.string() + ": only 8-bit PGM is supported");
  const auto header = static_cast<std::size_t>(in.tellg());
  LabelVolume m{1, h, w, std::vector<std::uint8_t>(w * h)};
  in.read(reinterpret_cast<char*>(m.labels.data()), static_cast<std::streamsize>(m.labels.size()));
  if (static_cast<std::size_t>(in.gcount()) != m.labels.size()) {
    throw IoError(path.string() + ": truncated PGM payload at byte offset " +
                  std::to_string(header + static_cast<std::size_t>(in.gcount())));
  }
  if (kind == MaskKind::kBinary) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      const std::uint8_t v = m.labels[i];
      if (v == maxval) m.labels[i] = 1;
      else if (v > 1) {
        throw IoError(path.string() + ": binary mask value " + std::to_string(v) + " at pixel " +
                      std::to_string(i) + " (byte offset " + std::to_string(header + i) +
                      ") is neither 0 nor maxval");
      }
    }
  }
  validate_labels(m.labels, kind, header, path.string() + ": ");
  return m;
}

}  // namespace

void LabelVolume::validate(MaskKind kind) const {
  if (labels.size() != size()) throw ShapeError("LabelVolume: label count does not match dimensions");
  validate_labels(labels, kind, 0, "");
}

LabelVolume read_mask(const std::filesystem::path& path, MaskKind kind) {
  if (is_pgm(path)) return read_pgm(path, kind);
  const NdArray a = load_cdt(path);
  if (a.dtype != DType::kU8) {
    throw IoError(path.string() + ": mask must be a u8 container, found " + dtype_name(a.dtype));
  }
  LabelVolume m;
  switch (a.dims.size()) {
    case 2: m = {1, a.dims[0], a.dims[1], {}}; break;
    case 3: m = {a.dims[0], a.dims[1], a.dims[2], {}}; break;
    case 4:
      if (a.dims[1] != 1) throw ShapeError(path.string() + ": 4-D mask must have one channel");
      m = {a.dims[0], a.dims[2], a.dims[3], {}};
      break;
    default:
      throw ShapeError(path.string() + ": mask must be 2-D, 3-D or N x 1 x H x W");
  }
  m.labels = a.payload;
  validate_labels(m.labels, kind, 6 + 4 * a.dims.size(), path.string() + ": ");
  return m;
}

void write_mask(const std::filesystem::path& path, const LabelVolume& mask, MaskKind kind) {
  mask.validate(kind);
  if (is_pgm(path)) {
    if (mask.depth != 1) throw ShapeError("write_mask: PGM holds a single slice");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> bytes = mask.labels;
    if (kind == MaskKind::kBinary) {
      for (auto& b : bytes) b = b ? 255 : 0;
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
    return;
  }
  std::vector<std::uint32_t> dims;
  if (mask.depth > 1) dims.push_back(static_cast<std::uint32_t>(mask.depth));
  dims.push_back(static_cast<std::uint32_t>(mask.height));
  dims.push_back(static_cast<std::uint32_t>(mask.width));
  save_cdt(path, NdArray::from_u8(std::move(dims), mask.labels));
}

// ---- severity --------------------------------------------------------------

const char* grade_name(SeverityGrade g) {
  switch (g) {
    case SeverityGrade::kCT0: return "CT-0";
    case SeverityGrade::kCT1: return "CT-1";
    case SeverityGrade::kCT2: return "CT-2";
    case SeverityGrade::kCT3: return "CT-3";
    case SeverityGrade::kCT4: return "CT-4";
  }
  return "?";
}

SeverityGrade grade_from_percentage(double pct) {
  if (!(pct >= 0.0 && pct <= 100.0)) {
    throw ConfigError("grade: infected percentage must lie in [0, 100], got " + std::to_string(pct));
  }
  if (pct == 0.0) return SeverityGrade::kCT0;
  if (pct < 25.0) return SeverityGrade::kCT1;
  if (pct < 50.0) return SeverityGrade::kCT2;
  if (pct < 75.0) return SeverityGrade::kCT3;
  return SeverityGrade::kCT4;
}

SeverityResult grade_severity(const LabelVolume& lesion, const LabelVolume& lungs) {
  lesion.validate(MaskKind::kBinary);
  lungs.validate(MaskKind::kLung);
  if (lesion.depth != lungs.depth || lesion.height != lungs.height || lesion.width != lungs.width) {
    throw ShapeError("grade: lesion stack " + std::to_string(lesion.depth) + "x" +
                     std::to_string(lesion.height) + "x" + std::to_string(lesion.width) +
                     " does not match lung stack " + std::to_string(lungs.depth) + "x" +
                     std::to_string(lungs.height) + "x" + std::to_string(lungs.width));
  }
  std::uint64_t lung_px[3] = {0, 0, 0};
  std::uint64_t hit_px[3] = {0, 0, 0};
  for (std::size_t i = 0; i < lungs.labels.size(); ++i) {
    const std::uint8_t l = lungs.labels[i];
    ++lung_px[l];
    if (lesion.labels[i] != 0) ++hit_px[l];
  }
  if (lung_px[kRightLung] == 0) throw UndefinedError("grade: right lung mask is empty");
  if (lung_px[kLeftLung] == 0) throw UndefinedError("grade: left lung mask is empty");
  SeverityResult r;
  r.right_pct = 100.0 * static_cast<double>(hit_px[kRightLung]) / static_cast<double>(lung_px[kRightLung]);
  r.left_pct = 100.0 * static_cast<double>(hit_px[kLeftLung]) / static_cast<double>(lung_px[kLeftLung]);
  r.grade = grade_from_percentage(std::max(r.left_pct, r.right_pct));
  return r;
}

}  // namespace cdnet
