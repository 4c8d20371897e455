#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "rangedepth/errors.hpp"

namespace rangedepth {

/// Row-major 2D raster, top row first. Pixel (u, v) is column u, row v.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, const T& fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(checked(w) * checked(h)), fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u);
  }
  [[nodiscard]] bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width && v < height;
  }

  T& operator()(int u, int v) { return data[index(u, v)]; }
  const T& operator()(int u, int v) const { return data[index(u, v)]; }

  bool operator==(const Grid&) const = default;

 private:
  static long long checked(int n) {
    if (n < 0) throw InputError("grid dimensions must be non-negative");
    return n;
  }
};

/// Linear RGB triple, nominally in [0, 1].
using Rgb = std::array<double, 3>;
using RgbImage = Grid<Rgb>;

template <typename A, typename B>
bool same_shape(const Grid<A>& a, const Grid<B>& b) {
  return a.width == b.width && a.height == b.height;
}

}  // namespace rangedepth
