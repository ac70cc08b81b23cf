#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refertok/errors.hpp"

namespace refertok {

// Per-pixel foreground indicator for one object region. Row-major,
// x/j index columns, y/i index rows, origin at the top-left corner.
struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h)
      : width(w), height(h), bits(w * h, 0) {}

  std::uint8_t at(std::size_t y, std::size_t x) const {
    return bits[y * width + x];
  }
  void set(std::size_t y, std::size_t x, bool fg = true) {
    bits[y * width + x] = fg ? 1 : 0;
  }
};

// Row-major interleaved intensities in [0, 1]; index (y*width + x)*channels + c.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> values;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, std::size_t c)
      : width(w), height(h), channels(c), values(w * h * c, 0.0) {}

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values[(y * width + x) * channels + c];
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return values[(y * width + x) * channels + c];
  }
};

// Minimal axis-aligned box around a region's foreground pixels.
struct BoundingBox {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  bool operator==(const BoundingBox&) const = default;
};

enum class ScaleRegime { Upscale, Downscale, Identity };

inline const char* scale_regime_name(ScaleRegime r) {
  switch (r) {
    case ScaleRegime::Upscale: return "upscale";
    case ScaleRegime::Downscale: return "downscale";
    case ScaleRegime::Identity: return "identity";
  }
  return "identity";
}

// Outcome of the adaptive scaling decision for one region.
struct ScalePlan {
  double s = 1.0;
  ScaleRegime regime = ScaleRegime::Identity;
  // Foreground area the resampled mask is steered toward, in units of
  // patch areas: n when upscaling, 100 when downscaling, 0 when untouched.
  std::size_t target_area_tokens = 0;
};

inline std::size_t mask_area(const BinaryMask& mask) {
  std::size_t count = 0;
  for (std::uint8_t b : mask.bits) count += (b != 0);
  return count;
}

inline BoundingBox bounding_box(const BinaryMask& mask) {
  std::size_t min_x = mask.width, min_y = mask.height, max_x = 0, max_y = 0;
  bool any = false;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      any = true;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (!any) raise(ErrorKind::EmptyMask, "bounding_box of an all-zero mask");
  return {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

// Adaptive scaling ratio for a region of `area` foreground pixels given the
// encoder patch area and the per-object token count n.
//
//   s = sqrt(100*patch_area / area)  when area > 100*patch_area
//   s = sqrt(n*patch_area / area)    when area < n*patch_area
//   s = 1                            otherwise (equality included)
//
// n >= 100 would make the two thresholds cross, so it is rejected.
inline ScalePlan scale_ratio(std::size_t area, std::size_t patch_area,
                             std::size_t n) {
  if (n >= 100)
    raise(ErrorKind::InvalidConfig,
          "n must be < 100, got " + std::to_string(n));
  if (area == 0) raise(ErrorKind::EmptyMask, "scale_ratio of an empty region");
  if (patch_area == 0 || n == 0)
    raise(ErrorKind::InvalidConfig, "patch_area and n must be >= 1");
  const double a = static_cast<double>(area);
  if (area > 100 * patch_area) {
    return {std::sqrt(100.0 * static_cast<double>(patch_area) / a),
            ScaleRegime::Downscale, 100};
  }
  if (area < n * patch_area) {
    return {std::sqrt(static_cast<double>(n) * static_cast<double>(patch_area) / a),
            ScaleRegime::Upscale, n};
  }
  return {1.0, ScaleRegime::Identity, 0};
}

namespace detail {

inline std::size_t scaled_extent(std::size_t extent, double s) {
  const auto r = static_cast<std::size_t>(
      std::llround(static_cast<double>(extent) * s));
  return std::max<std::size_t>(r, 1);
}

}  // namespace detail

// Bilinear resample of an image to explicit target dimensions. Sampling uses
// the pixel-center convention src = (dst + 0.5) * src_dim / dst_dim - 0.5
// with edge clamping.
inline ImageBuffer resize_image(const ImageBuffer& img, std::size_t out_w,
                                std::size_t out_h) {
  if (img.width == 0 || img.height == 0)
    raise(ErrorKind::DegenerateImage, "resize_image of an empty image");
  ImageBuffer out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  for (std::size_t yo = 0; yo < out_h; ++yo) {
    const double fy = (static_cast<double>(yo) + 0.5) * sy - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(cy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = cy - static_cast<double>(y0);
    for (std::size_t xo = 0; xo < out_w; ++xo) {
      const double fx = (static_cast<double>(xo) + 0.5) * sx - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(cx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(yo, xo, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

// Uniform resampling of image and mask by the plan's exact ratio s.
//
// Output dimensions are round(dim * s), clamped to >= 1. The image is
// resampled bilinearly (src = (dst + 0.5) / s - 0.5, edge-clamped) and the
// mask by nearest neighbour (src = floor((dst + 0.5) / s), clamped) so it
// stays binary. Both mappings depend only on s, not on the image extent:
// content away from the borders lands at the same place regardless of how
// large the surrounding image is.
inline std::pair<ImageBuffer, BinaryMask> resample_region(
    const ImageBuffer& img, const BinaryMask& mask, const ScalePlan& plan) {
  if (img.width != mask.width || img.height != mask.height)
    raise(ErrorKind::DimMismatch, "resample_region: image/mask dims differ");
  if (plan.s == 1.0) return {img, mask};

  const double s = plan.s;
  const std::size_t out_w = detail::scaled_extent(img.width, s);
  const std::size_t out_h = detail::scaled_extent(img.height, s);

  ImageBuffer out_img(out_w, out_h, img.channels);
  for (std::size_t yo = 0; yo < out_h; ++yo) {
    const double fy = (static_cast<double>(yo) + 0.5) / s - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(cy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = cy - static_cast<double>(y0);
    for (std::size_t xo = 0; xo < out_w; ++xo) {
      const double fx = (static_cast<double>(xo) + 0.5) / s - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(cx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out_img.at(yo, xo, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }

  BinaryMask out_mask(out_w, out_h);
  for (std::size_t yo = 0; yo < out_h; ++yo) {
    const double fy = (static_cast<double>(yo) + 0.5) / s;
    const auto ys = std::min(static_cast<std::size_t>(std::max(std::floor(fy), 0.0)),
                             mask.height - 1);
    for (std::size_t xo = 0; xo < out_w; ++xo) {
      const double fx = (static_cast<double>(xo) + 0.5) / s;
      const auto xs = std::min(static_cast<std::size_t>(std::max(std::floor(fx), 0.0)),
                               mask.width - 1);
      out_mask.set(yo, xo, mask.at(ys, xs) != 0);
    }
  }
  return {out_img, out_mask};
}

// Enlarge a box about its center by `beta`, then clip to the image.
// beta = 1 returns the box unchanged; the result always contains the input
// box and never exits image bounds.
inline BoundingBox contextual_pad(const BoundingBox& box, std::size_t img_w,
                                  std::size_t img_h, double beta) {
  if (beta < 1.0)
    raise(ErrorKind::InvalidConfig, "padding factor must be >= 1");
  if (box.x + box.w > img_w || box.y + box.h > img_h)
    raise(ErrorKind::OutOfBounds, "contextual_pad: box exceeds image");
  const double cx = static_cast<double>(box.x) + static_cast<double>(box.w) / 2.0;
  const double cy = static_cast<double>(box.y) + static_cast<double>(box.h) / 2.0;
  const double half_w = beta * static_cast<double>(box.w) / 2.0;
  const double half_h = beta * static_cast<double>(box.h) / 2.0;
  const auto x0 = std::max<std::int64_t>(std::llround(cx - half_w), 0);
  const auto y0 = std::max<std::int64_t>(std::llround(cy - half_h), 0);
  const auto x1 = std::min<std::int64_t>(std::llround(cx + half_w),
                                         static_cast<std::int64_t>(img_w));
  const auto y1 = std::min<std::int64_t>(std::llround(cy + half_h),
                                         static_cast<std::int64_t>(img_h));
  BoundingBox padded{static_cast<std::size_t>(x0), static_cast<std::size_t>(y0),
                     static_cast<std::size_t>(x1 - x0),
                     static_cast<std::size_t>(y1 - y0)};
  // Rounding must never lose part of the original box.
  padded.w = std::max(padded.w, box.x + box.w - padded.x);
  padded.h = std::max(padded.h, box.y + box.h - padded.y);
  return padded;
}

inline ImageBuffer crop(const ImageBuffer& img, const BoundingBox& box) {
  if (box.x + box.w > img.width || box.y + box.h > img.height)
    raise(ErrorKind::OutOfBounds, "crop: box exceeds image");
  ImageBuffer out(box.w, box.h, img.channels);
  for (std::size_t y = 0; y < box.h; ++y)
    for (std::size_t x = 0; x < box.w; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(box.y + y, box.x + x, c);
  return out;
}

inline BinaryMask crop_mask(const BinaryMask& mask, const BoundingBox& box) {
  if (box.x + box.w > mask.width || box.y + box.h > mask.height)
    raise(ErrorKind::OutOfBounds, "crop_mask: box exceeds mask");
  BinaryMask out(box.w, box.h);
  for (std::size_t y = 0; y < box.h; ++y)
    for (std::size_t x = 0; x < box.w; ++x)
      out.set(y, x, mask.at(box.y + y, box.x + x) != 0);
  return out;
}

}  // namespace refertok
