#pragma once

#include <cstddef>
#include <vector>

namespace cdnet::testing {

struct TableRow {
  const char* column;  // encoder / decoder / supervision
  std::size_t level;
  const char* layer;
  const char* label;  // trace label realizing the row
  std::size_t h, w, c;
};

// Every populated cell of the architecture table (512x512x1 input, base 64, 5 levels).
inline const std::vector<TableRow>& architecture_table() {
  static const std::vector<TableRow> rows = {
      {"encoder", 1, "Input Layer", "enc1.input", 512, 512, 1},
      {"encoder", 1, "Conv2D+ZP", "enc1.conv1", 512, 512, 64},
      {"encoder", 1, "GN", "enc1.gn", 512, 512, 64},
      {"encoder", 1, "Conv2D+ZP", "enc1.conv2", 512, 512, 64},
      {"encoder", 1, "Conv2D", "enc1.down", 256, 256, 64},
      {"encoder", 2, "Conv2D+ZP", "enc2.conv1", 256, 256, 128},
      {"encoder", 2, "GN", "enc2.gn", 256, 256, 128},
      {"encoder", 2, "Conv2D+ZP", "enc2.conv2", 256, 256, 128},
      {"encoder", 2, "Conv2D", "enc2.down", 128, 128, 128},
      {"encoder", 3, "Conv2D+ZP", "enc3.conv1", 128, 128, 256},
      {"encoder", 3, "GN", "enc3.gn", 128, 128, 256},
      {"encoder", 3, "Conv2D+ZP", "enc3.conv2", 128, 128, 256},
      {"encoder", 3, "Conv2D", "enc3.down", 64, 64, 256},
      {"encoder", 4, "Conv2D+ZP", "enc4.conv1", 64, 64, 512},
      {"encoder", 4, "GN", "enc4.gn", 64, 64, 512},
      {"encoder", 4, "Conv2D+ZP", "enc4.conv2", 64, 64, 512},
      {"encoder", 4, "Conv2D", "enc4.down", 32, 32, 512},
      {"encoder", 5, "Conv2D+ZP", "enc5.conv1", 32, 32, 1024},
      {"encoder", 5, "GN", "enc5.gn", 32, 32, 1024},
      {"encoder", 5, "Conv2D+ZP", "enc5.conv2", 32, 32, 1024},
      {"decoder", 1, "UP2D", "dec1.up", 512, 512, 128},
      {"decoder", 1, "Conv2D+ZP", "dec1.conv1", 512, 512, 64},
      {"decoder", 1, "GN", "dec1.gn", 512, 512, 64},
      {"decoder", 1, "Conv2D+ZP", "dec1.conv2", 512, 512, 64},
      {"decoder", 1, "Output Layer", "dec1.output", 512, 512, 1},
      {"decoder", 2, "UP2D", "dec2.up", 256, 256, 256},
      {"decoder", 2, "Conv2D+ZP", "dec2.conv1", 256, 256, 128},
      {"decoder", 2, "GN", "dec2.gn", 256, 256, 128},
      {"decoder", 2, "Conv2D+ZP", "dec2.conv2", 256, 256, 128},
      {"decoder", 3, "UP2D", "dec3.up", 128, 128, 512},
      {"decoder", 3, "Conv2D+ZP", "dec3.conv1", 128, 128, 256},
      {"decoder", 3, "GN", "dec3.gn", 128, 128, 256},
      {"decoder", 3, "Conv2D+ZP", "dec3.conv2", 128, 128, 256},
      {"decoder", 4, "UP2D", "dec4.up", 64, 64, 1024},
      {"decoder", 4, "Conv2D+ZP", "dec4.conv1", 64, 64, 512},
      {"decoder", 4, "GN", "dec4.gn", 64, 64, 512},
      {"decoder", 4, "Conv2D+ZP", "dec4.conv2", 64, 64, 512},
      {"supervision", 2, "Conv2D+GN+UP2D", "aux2.out", 512, 512, 64},
      {"supervision", 3, "(Conv2D+GN+UP2D) x2", "aux3.out", 512, 512, 64},
      {"supervision", 4, "(Conv2D+GN+UP2D) x3", "aux4.out", 512, 512, 64},
  };
  return rows;
}

}  // namespace cdnet::testing
