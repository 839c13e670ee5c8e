#pragma once

// Sample directories and a seeded synthetic blob dataset.
//
// Directory layout:  <dir>/images/<stem>.cdt   f32/f64, H x W, C x H x W or 1 x C x H x W
//                    <dir>/masks/<stem>.cdt|.pgm binary mask, same H x W
// Samples are ordered by stem.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdnet/trainer.hpp"

namespace cdnet {

template <typename T>
struct NamedSample {
  std::string stem;
  Sample<T> sample;
};

template <typename T>
std::vector<NamedSample<T>> load_dataset(const std::filesystem::path& dir);

template <typename T>
void save_dataset(const std::filesystem::path& dir, const std::vector<NamedSample<T>>& samples);

/// Loads a single image tensor (1 x C x H x W) from a CDT1 file.
template <typename T>
Tensor<T> load_image(const std::filesystem::path& path);

/// Binary mask file -> 1 x 1 x H x W tensor of {0, 1}.
template <typename T>
Tensor<T> load_mask_tensor(const std::filesystem::path& path);

struct BlobOptions {
  std::size_t count = 8;
  std::size_t size = 64;
  std::size_t channels = 1;
  std::size_t max_blobs = 3;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Bright ellipses on a darker textured background; the mask marks the ellipses.
template <typename T>
std::vector<Sample<T>> make_blob_dataset(const BlobOptions& opts);

}  // namespace cdnet
