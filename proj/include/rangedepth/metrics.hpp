#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "rangedepth/camera.hpp"
#include "rangedepth/errors.hpp"
#include "rangedepth/grid.hpp"
#include "rangedepth/local_gp.hpp"
#include "rangedepth/range_ingest.hpp"

namespace rangedepth {

namespace detail {

// Neumaier-compensated running sum.
class StableSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

struct DepthEvalReport {
  double mae = 0.0;
  double rmse_log = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
};

inline nlohmann::json to_json(const DepthEvalReport& r) {
  return {{"mae", r.mae}, {"rmse_log", r.rmse_log}, {"n_evaluated", r.n_evaluated}, {"n_skipped", r.n_skipped}};
}

struct PixelIndex {
  int u = 0;
  int v = 0;
};

/// Pixel whose centre is nearest to the ray of `a`, if it is inside the image.
inline std::optional<PixelIndex> angles_to_pixel(const AngularCoord& a, const Intrinsics& intr) {
  const auto ray = angles_to_ray(a);
  const double pu = std::round(intr.fx * ray.x() / ray.z() + intr.cx);
  const double pv = std::round(intr.fy * ray.y() / ray.z() + intr.cy);
  if (!(pu >= 0.0 && pv >= 0.0 && pu <= intr.width - 1 && pv <= intr.height - 1)) return std::nullopt;
  return PixelIndex{static_cast<int>(pu), static_cast<int>(pv)};
}

/// MAE and natural-log RMSE of `pred` at the pixels hit by ground-truth
/// directions. Ground truth landing on invalid or out-of-image pixels is
/// skipped and counted. Several GT points on one pixel are each scored.
inline DepthEvalReport depth_errors(const DepthField& pred, std::span<const AngularMeasurement> gt,
                                    const Intrinsics& intr) {
  if (pred.width() != intr.width || pred.height() != intr.height)
    throw InputError("depth_errors: prediction does not match the intrinsics");
  detail::StableSum abs_sum;
  detail::StableSum log_sq_sum;
  DepthEvalReport report;
  for (const auto& m : gt) {
    const auto px = angles_to_pixel(m.angles, intr);
    if (!px || !pred.is_valid(px->u, px->v)) {
      ++report.n_skipped;
      continue;
    }
    const double p = pred.mean(px->u, px->v);
    abs_sum.add(std::abs(p - m.depth));
    const double dl = std::log(p) - std::log(m.depth);
    log_sq_sum.add(dl * dl);
    ++report.n_evaluated;
  }
  if (report.n_evaluated == 0) throw InputError("depth_errors: no ground-truth point hits a valid prediction");
  const double n = static_cast<double>(report.n_evaluated);
  report.mae = abs_sum.value() / n;
  report.rmse_log = std::sqrt(log_sq_sum.value() / n);
  return report;
}

/// PSNR in dB for [0,1] images over all channels; +inf for identical inputs.
inline double psnr(const RgbImage& a, const RgbImage& b) {
  if (!same_shape(a, b)) throw InputError("psnr: image dimensions differ");
  if (a.size() == 0) throw InputError("psnr: empty images");
  detail::StableSum sq;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = a.data[i][static_cast<std::size_t>(c)] - b.data[i][static_cast<std::size_t>(c)];
      sq.add(d * d);
    }
  const double mse = sq.value() / (3.0 * static_cast<double>(a.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

inline Grid<double> luminance(const RgbImage& img) {
  Grid<double> y(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    y.data[i] = 0.299 * img.data[i][0] + 0.587 * img.data[i][1] + 0.114 * img.data[i][2];
  return y;
}

enum class SsimWindow { gaussian11, block8 };

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline double ssim_from_moments(double mx, double my, double sxx, double syy, double sxy) {
  return ((2.0 * mx * my + kSsimC1) * (2.0 * sxy + kSsimC2)) /
         ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
}

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    w[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace detail

/// Mean SSIM over luminance. gaussian11 evaluates an 11x11, sigma 1.5
/// weighted window at every position fully inside the image; block8 uses
/// non-overlapping uniform 8x8 blocks.
inline double ssim_gray(const Grid<double>& x, const Grid<double>& y, SsimWindow window = SsimWindow::gaussian11) {
  if (!same_shape(x, y)) throw InputError("ssim: image dimensions differ");
  const int size = window == SsimWindow::gaussian11 ? 11 : 8;
  if (x.width < size || x.height < size) throw InputError("ssim: image is smaller than the window");

  std::vector<double> weights(static_cast<std::size_t>(size * size), 1.0 / (size * size));
  if (window == SsimWindow::gaussian11) {
    const auto g = detail::gaussian_window_1d(size, 1.5);
    for (int j = 0; j < size; ++j)
      for (int i = 0; i < size; ++i)
        weights[static_cast<std::size_t>(j * size + i)] = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
  }
  const int step = window == SsimWindow::gaussian11 ? 1 : size;

  detail::StableSum total;
  std::size_t count = 0;
  for (int v0 = 0; v0 + size <= x.height; v0 += step) {
    for (int u0 = 0; u0 + size <= x.width; u0 += step) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int j = 0; j < size; ++j) {
        for (int i = 0; i < size; ++i) {
          const double w = weights[static_cast<std::size_t>(j * size + i)];
          const double a = x(u0 + i, v0 + j);
          const double b = y(u0 + i, v0 + j);
          mx += w * a;
          my += w * b;
          xx += w * a * a;
          yy += w * b * b;
          xy += w * a * b;
        }
      }
      total.add(detail::ssim_from_moments(mx, my, xx - mx * mx, yy - my * my, xy - mx * my));
      ++count;
    }
  }
  return total.value() / static_cast<double>(count);
}

inline double ssim(const RgbImage& a, const RgbImage& b, SsimWindow window = SsimWindow::gaussian11) {
  if (!same_shape(a, b)) throw InputError("ssim: image dimensions differ");
  return ssim_gray(luminance(a), luminance(b), window);
}

}  // namespace rangedepth
