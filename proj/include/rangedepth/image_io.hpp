#pragma once

// File formats:
//   PFM  "Pf" (1 channel) / "PF" (3 channels), little-endian float32,
//        rows stored bottom to top, scale field -1.0
//   PGM  binary "P5", 8-bit, rows top to bottom; masks use 255 = set
//   PNG  8-bit RGB through libpng

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "rangedepth/errors.hpp"
#include "rangedepth/grid.hpp"
#include "rangedepth/local_gp.hpp"

namespace rangedepth {

struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;  // top row first, channels interleaved

  bool operator==(const PfmImage& o) const {
    return width == o.width && height == o.height && channels == o.channels && data.size() == o.data.size() &&
           std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
  }
};

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xff00U) | ((x << 8) & 0xff0000U) | (x << 24);
}

// Reads one whitespace-delimited header token; skips '#' comments.
inline std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline int positive_int(const std::string& tok, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw InputError(what);
    return v;
  } catch (const std::logic_error&) {
    throw InputError(what);
  }
}

}  // namespace detail

inline void write_pfm(const std::string& path, const PfmImage& img) {
  if (img.channels != 1 && img.channels != 3) throw InputError("PFM: channels must be 1 or 3");
  const std::size_t row = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
  if (img.data.size() != row * static_cast<std::size_t>(img.height)) throw InputError("PFM: data size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << (img.channels == 1 ? "Pf\n" : "PF\n") << img.width << ' ' << img.height << "\n-1.0\n";
  std::vector<std::uint32_t> buf(row);
  for (int v = img.height - 1; v >= 0; --v) {
    std::memcpy(buf.data(), img.data.data() + static_cast<std::size_t>(v) * row, row * sizeof(float));
    if constexpr (std::endian::native == std::endian::big)
      for (auto& w : buf) w = detail::byteswap32(w);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!out) throw InputError("failed writing " + path);
}

inline PfmImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  PfmImage img;
  const auto magic = detail::header_token(in);
  if (magic == "Pf")
    img.channels = 1;
  else if (magic == "PF")
    img.channels = 3;
  else
    throw InputError(path + ": not a PFM file");
  img.width = detail::positive_int(detail::header_token(in), path + ": bad PFM width");
  img.height = detail::positive_int(detail::header_token(in), path + ": bad PFM height");
  double scale = 0.0;
  try {
    scale = std::stod(detail::header_token(in));
  } catch (const std::logic_error&) {
    throw InputError(path + ": bad PFM scale");
  }
  if (scale == 0.0) throw InputError(path + ": bad PFM scale");
  const bool little = scale < 0.0;
  const std::size_t row = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
  img.data.resize(row * static_cast<std::size_t>(img.height));
  std::vector<std::uint32_t> buf(row);
  for (int v = img.height - 1; v >= 0; --v) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(row * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(row * sizeof(float))) throw InputError(path + ": truncated PFM data");
    if (little != (std::endian::native == std::endian::little))
      for (auto& w : buf) w = detail::byteswap32(w);
    std::memcpy(img.data.data() + static_cast<std::size_t>(v) * row, buf.data(), row * sizeof(float));
  }
  return img;
}

inline PfmImage to_pfm(const Grid<double>& g) {
  PfmImage img{g.width, g.height, 1, {}};
  img.data.reserve(g.size());
  for (double x : g.data) img.data.push_back(static_cast<float>(x));
  return img;
}

inline Grid<double> pfm_to_grid(const PfmImage& img) {
  if (img.channels != 1) throw InputError("expected a single-channel PFM");
  Grid<double> g(img.width, img.height);
  std::copy(img.data.begin(), img.data.end(), g.data.begin());
  return g;
}

inline void write_pgm(const std::string& path, const Grid<std::uint8_t>& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(g.data.data()), static_cast<std::streamsize>(g.size()));
  if (!out) throw InputError("failed writing " + path);
}

inline Grid<std::uint8_t> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  if (detail::header_token(in) != "P5") throw InputError(path + ": not a binary PGM (P5)");
  const int w = detail::positive_int(detail::header_token(in), path + ": bad PGM width");
  const int h = detail::positive_int(detail::header_token(in), path + ": bad PGM height");
  if (detail::header_token(in) != "255") throw InputError(path + ": only 8-bit PGM (maxval 255) is supported");
  Grid<std::uint8_t> g(w, h);
  in.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(g.size()));
  if (in.gcount() != static_cast<std::streamsize>(g.size())) throw InputError(path + ": truncated PGM data");
  return g;
}

/// 0/1 flags to a 0/255 mask image and back.
inline Grid<std::uint8_t> mask_to_pgm(const Grid<std::uint8_t>& flags) {
  Grid<std::uint8_t> out(flags.width, flags.height);
  for (std::size_t i = 0; i < flags.size(); ++i) out.data[i] = flags.data[i] ? 255 : 0;
  return out;
}

inline Grid<std::uint8_t> pgm_to_mask(const Grid<std::uint8_t>& pgm) {
  Grid<std::uint8_t> out(pgm.width, pgm.height);
  for (std::size_t i = 0; i < pgm.size(); ++i) out.data[i] = pgm.data[i] >= 128 ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// PNG

inline std::uint8_t quantize_unit(double c) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(c, 0.0, 1.0)));
}

inline void write_png(const std::string& path, const RgbImage& img) {
  std::vector<std::uint8_t> bytes(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) bytes[3 * i + c] = quantize_unit(img.data[i][c]);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw InputError("cannot write PNG " + path + ": " + png.message);
}

/// Any PNG libpng understands, converted to 8-bit RGB and scaled by 1/255.
inline RgbImage read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw InputError("cannot read PNG " + path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("cannot decode PNG " + path + ": " + png.message);
  }
  RgbImage img(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < img.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) img.data[i][c] = bytes[3 * i + c] / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// DepthField files

struct DepthFieldPaths {
  std::string mean;
  std::string variance;
  std::string valid;
};

inline void save_depth_field(const DepthField& field, const DepthFieldPaths& paths) {
  write_pfm(paths.mean, to_pfm(field.mean));
  write_pfm(paths.variance, to_pfm(field.variance));
  write_pgm(paths.valid, mask_to_pgm(field.valid));
}

/// Loads a mean PFM plus optional variance PFM and validity PGM. Without a
/// mask, pixels with positive depth are valid; without variances, valid
/// pixels get variance 0.
inline DepthField load_depth_field(const std::string& mean_path, const std::string& valid_path = {},
                                   const std::string& variance_path = {}) {
  const auto mean = pfm_to_grid(read_pfm(mean_path));
  DepthField field(mean.width, mean.height);
  Grid<std::uint8_t> valid(mean.width, mean.height, 0);
  if (!valid_path.empty()) {
    valid = pgm_to_mask(read_pgm(valid_path));
    if (!same_shape(valid, mean)) throw InputError(valid_path + ": mask size differs from " + mean_path);
  } else {
    for (std::size_t i = 0; i < mean.size(); ++i) valid.data[i] = mean.data[i] > 0.0 && std::isfinite(mean.data[i]);
  }
  Grid<double> variance(mean.width, mean.height, 0.0);
  if (!variance_path.empty()) {
    variance = pfm_to_grid(read_pfm(variance_path));
    if (!same_shape(variance, mean)) throw InputError(variance_path + ": size differs from " + mean_path);
  }
  for (int v = 0; v < mean.height; ++v)
    for (int u = 0; u < mean.width; ++u)
      if (valid(u, v) && mean(u, v) > 0.0) field.set(u, v, mean(u, v), variance(u, v));
  return field;
}

}  // namespace rangedepth
