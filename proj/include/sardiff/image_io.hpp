#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "sardiff/tensor.hpp"

namespace sardiff {

// Binary PGM (P5), 8-bit. Values in [-1,1] map linearly to [0,255].
inline void write_pgm(const std::filesystem::path& path, const Tensor<float>& image) {
  require(image.rank() == 2, "write_pgm: expected a [H,W] tensor");
  std::ofstream f(path, std::ios::binary);
  ensure(f.is_open(), "write_pgm: cannot open " + path.string());
  f << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (int64_t i = 0; i < image.size(); ++i) {
    const double v = (static_cast<double>(image[i]) + 1.0) * 0.5 * 255.0;
    const uint8_t byte = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
    f.write(reinterpret_cast<const char*>(&byte), 1);
  }
  ensure(f.good(), "write_pgm: write failure");
}

// Reads an 8- or 16-bit P5 PGM into raw grayscale values (no rescaling).
inline Tensor<float> read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  ensure(f.is_open(), "read_pgm: cannot open " + path.string());
  std::string magic;
  f >> magic;
  ensure(magic == "P5", "read_pgm: not a binary PGM: " + path.string());
  auto next_int = [&f, &path]() {
    // skip whitespace and '#' comment lines
    for (;;) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    long long v = -1;
    f >> v;
    ensure(v >= 0, "read_pgm: malformed header in " + path.string());
    return v;
  };
  const int64_t w = next_int();
  const int64_t h = next_int();
  const int64_t maxval = next_int();
  ensure(maxval > 0 && maxval < 65536, "read_pgm: bad maxval");
  f.get();   // single whitespace after maxval
  Tensor<float> out({h, w});
  if (maxval < 256) {
    std::vector<uint8_t> row(static_cast<size_t>(w));
    for (int64_t y = 0; y < h; ++y) {
      f.read(reinterpret_cast<char*>(row.data()), w);
      ensure(f.gcount() == w, "read_pgm: truncated pixel data");
      for (int64_t x = 0; x < w; ++x) out[y * w + x] = row[static_cast<size_t>(x)];
    }
  } else {
    std::vector<uint8_t> row(static_cast<size_t>(2 * w));
    for (int64_t y = 0; y < h; ++y) {
      f.read(reinterpret_cast<char*>(row.data()), 2 * w);
      ensure(f.gcount() == 2 * w, "read_pgm: truncated pixel data");
      for (int64_t x = 0; x < w; ++x)
        out[y * w + x] = static_cast<float>(256 * row[2 * x] + row[2 * x + 1]);
    }
  }
  return out;
}

// Tile of images arranged in a grid, for qualitative inspection.
inline Tensor<float> make_montage(const Tensor<float>& images, int columns) {
  require(images.rank() == 4 && images.dim(1) == 1, "make_montage: expected [N,1,H,W]");
  require(columns >= 1, "make_montage: columns must be >= 1");
  const int64_t n = images.dim(0), H = images.dim(2), W = images.dim(3);
  const int64_t rows = (n + columns - 1) / columns;
  const int64_t pad = 2;
  Tensor<float> grid({rows * (H + pad) + pad, columns * (W + pad) + pad});
  grid.fill(-1.0f);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t r = i / columns, c = i % columns;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        grid[(r * (H + pad) + pad + y) * grid.dim(1) + c * (W + pad) + pad + x] =
            images.at(i, 0, y, x);
  }
  return grid;
}

}  // namespace sardiff
