#pragma once

// CT slice preprocessing, label-mask files and severity grading.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Intensity window in Hounsfield units. The default floor is the standard
/// lung-window floor (-1000 HU) and the ceiling soft tissue (170 HU).
struct HuWindow {
  double lo = -1000.0;
  double hi = 170.0;
};

template <typename T>
struct SliceRecord {
  std::vector<double> raw;  // HU, row-major source_h x source_w
  std::size_t source_h = 0;
  std::size_t source_w = 0;
  Tensor<T> preprocessed;   // 1 x 1 x target_h x target_w, values in [0, 1]
};

/// Clip to the window, map the window linearly onto [0, 1], then bilinear-resize.
template <typename T>
SliceRecord<T> preprocess_slice(std::span<const double> raw_hu, std::size_t height, std::size_t width,
                                std::size_t target_h, std::size_t target_w, const HuWindow& window = {});

enum class MaskKind {
  kBinary,  // {0, 1}
  kLung,    // {0 background, 1 right lung, 2 left lung}
};

/// Stack of 2-D label slices, row-major (depth, height, width).
struct LabelVolume {
  std::size_t depth = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return depth * height * width; }
  /// Throws IoError reporting the first label outside the kind's alphabet.
  void validate(MaskKind kind) const;
  bool operator==(const LabelVolume&) const = default;
};

inline constexpr std::uint8_t kRightLung = 1;
inline constexpr std::uint8_t kLeftLung = 2;

/// `.pgm` paths use 8-bit binary PGM (P5, single slice); anything else is a u8 CDT1 container.
/// Binary PGM masks map maxval to 1.
LabelVolume read_mask(const std::filesystem::path& path, MaskKind kind);
void write_mask(const std::filesystem::path& path, const LabelVolume& mask, MaskKind kind);

enum class SeverityGrade { kCT0 = 0, kCT1, kCT2, kCT3, kCT4 };

const char* grade_name(SeverityGrade g);

/// 0 -> CT-0; (0, 25) -> CT-1; [25, 50) -> CT-2; [50, 75) -> CT-3; [75, 100] -> CT-4.
SeverityGrade grade_from_percentage(double pct);

struct SeverityResult {
  double left_pct = 0.0;
  double right_pct = 0.0;
  SeverityGrade grade = SeverityGrade::kCT0;
};

/// Per-lung infected percentage over the whole stack; grade from the larger one.
/// Lesion pixels outside both lungs are ignored. Throws UndefinedError when a lung is empty.
SeverityResult grade_severity(const LabelVolume& lesion, const LabelVolume& lungs);

}  // namespace cdnet
