#include "vfl/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vfl/core/error.hpp"

namespace vfl::data {
namespace {

// Sample stored as C planes of H x W values in [0, 1].
struct Planes {
  std::size_t c, h, w;
  std::vector<float> v;

  float& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
};

// Nearest-neighbour inverse warp: output (x, y) samples the source at
// (a*x + b*y + tx, c*x + d*y + ty) around the image centre.
void warp(Planes& p, double a, double b, double tx, double c, double d, double ty) {
  Planes out = p;
  const double cx = (double(p.w) - 1) / 2, cy = (double(p.h) - 1) / 2;
  for (std::size_t ch = 0; ch < p.c; ++ch)
    for (std::size_t y = 0; y < p.h; ++y)
      for (std::size_t x = 0; x < p.w; ++x) {
        const double dx = double(x) - cx, dy = double(y) - cy;
        const long sx = std::lround(a * dx + b * dy + tx + cx);
        const long sy = std::lround(c * dx + d * dy + ty + cy);
        out.at(ch, y, x) = (sx >= 0 && sy >= 0 && sx < long(p.w) && sy < long(p.h))
                               ? p.at(ch, std::size_t(sy), std::size_t(sx))
                               : 0.0f;
      }
  p = std::move(out);
}

void apply_op(Planes& p, std::size_t op, Rng& rng) {
  const double m = rng.uniform();            // magnitude in [0, 1)
  const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const std::size_t plane = p.h * p.w;
  switch (op) {
    case 0:  // identity
      break;
    case 1: {  // autocontrast
      for (std::size_t ch = 0; ch < p.c; ++ch) {
        auto first = p.v.begin() + long(ch * plane);
        auto [lo, hi] = std::minmax_element(first, first + long(plane));
        const float l = *lo, span = *hi - *lo;
        if (span > 1e-6f)
          std::transform(first, first + long(plane), first, [&](float v) { return (v - l) / span; });
      }
      break;
    }
    case 2: {  // brightness
      const float f = float(1.0 + sign * 0.9 * m);
      for (float& v : p.v) v *= f;
      break;
    }
    case 3: {  // contrast
      const float f = float(1.0 + sign * 0.9 * m);
      for (std::size_t ch = 0; ch < p.c; ++ch) {
        auto first = p.v.begin() + long(ch * plane);
        double mean = 0;
        for (auto it = first; it != first + long(plane); ++it) mean += *it;
        mean /= double(plane);
        for (auto it = first; it != first + long(plane); ++it) *it = float(mean + f * (*it - mean));
      }
      break;
    }
    case 4: {  // solarize
      const float t = float(1.0 - m);
      for (float& v : p.v)
        if (v >= t) v = 1.0f - v;
      break;
    }
    case 5: {  // posterize
      const double levels = std::exp2(8.0 - std::floor(4.0 * m));
      for (float& v : p.v) v = float(std::floor(v * (levels - 1) + 0.5) / (levels - 1));
      break;
    }
    case 6: {  // rotate up to 30 degrees
      const double t = sign * m * std::numbers::pi / 6;
      warp(p, std::cos(t), std::sin(t), 0, -std::sin(t), std::cos(t), 0);
      break;
    }
    case 7:  // shear x
      warp(p, 1, sign * 0.3 * m, 0, 0, 1, 0);
      break;
    case 8:  // shear y
      warp(p, 1, 0, 0, sign * 0.3 * m, 1, 0);
      break;
    case 9:  // translate x
      warp(p, 1, 0, sign * 0.3 * m * double(p.w), 0, 1, 0);
      break;
    case 10:  // translate y
      warp(p, 1, 0, 0, 0, 1, sign * 0.3 * m * double(p.h));
      break;
    default:
      break;
  }
  for (float& v : p.v) v = std::clamp(v, 0.0f, 1.0f);
}

constexpr std::size_t kOpCount = 11;

}  // namespace

AugmentOptions default_augment_options(const std::string& dataset_name) {
  AugmentOptions o;
  o.horizontal_flip = dataset_name != "mnist";
  return o;
}

Augmenter::Augmenter(Geometry geometry, FeatureRange range, AugmentOptions options)
    : geometry_(geometry), range_(std::move(range)), options_(options) {
  if (range_.lo.size() != geometry_.channels || range_.hi.size() != geometry_.channels)
    throw ValidationError("feature range needs one interval per channel");
}

void Augmenter::check(const Tensor& batch) const {
  if (batch.rows() > 0 && batch.row_size() != geometry_.features())
    throw ValidationError("augmentation input has " + std::to_string(batch.row_size()) +
                          " features, geometry expects " + std::to_string(geometry_.features()));
}

void Augmenter::weak_image(float* sample, Rng& rng) const {
  const std::size_t c = geometry_.channels, h = geometry_.height, w = geometry_.width;
  const long s = long(options_.max_shift);
  const long dx = long(rng.below(std::size_t(2 * s + 1))) - s;
  const long dy = long(rng.below(std::size_t(2 * s + 1))) - s;
  const bool flip = options_.horizontal_flip && rng.bernoulli(0.5);
  std::vector<float> out(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Uncovered pixels take the channel's lower bound (background).
    const float fill = range_.lo[ch];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const long sx0 = long(x) - dx, sy = long(y) - dy;
        const long sx = flip ? long(w) - 1 - sx0 : sx0;
        out[(ch * h + y) * w + x] = (sx >= 0 && sy >= 0 && sx < long(w) && sy < long(h))
                                        ? sample[(ch * h + std::size_t(sy)) * w + std::size_t(sx)]
                                        : fill;
      }
  }
  std::copy(out.begin(), out.end(), sample);
}

void Augmenter::strong_image(float* sample, Rng& rng) const {
  weak_image(sample, rng);
  const std::size_t c = geometry_.channels, h = geometry_.height, w = geometry_.width;
  Planes p{c, h, w, std::vector<float>(c * h * w)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float lo = range_.lo[ch], span = std::max(range_.hi[ch] - lo, 1e-12f);
    for (std::size_t i = 0; i < h * w; ++i)
      p.v[ch * h * w + i] = std::clamp((sample[ch * h * w + i] - lo) / span, 0.0f, 1.0f);
  }
  for (std::size_t k = 0; k < options_.ops_per_sample; ++k) apply_op(p, rng.below(kOpCount), rng);

  const std::size_t max_side = std::max<std::size_t>(
      1, std::size_t(options_.cutout_fraction * double(std::min(h, w))));
  const std::size_t side = 1 + rng.below(max_side);
  const std::size_t cy = rng.below(h), cx = rng.below(w);
  const std::size_t y0 = cy >= side / 2 ? cy - side / 2 : 0, x0 = cx >= side / 2 ? cx - side / 2 : 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = y0; y < std::min(h, y0 + side); ++y)
      for (std::size_t x = x0; x < std::min(w, x0 + side); ++x) p.at(ch, y, x) = 0.5f;

  for (std::size_t ch = 0; ch < c; ++ch) {
    const float lo = range_.lo[ch], span = range_.hi[ch] - lo;
    for (std::size_t i = 0; i < h * w; ++i) sample[ch * h * w + i] = lo + p.v[ch * h * w + i] * span;
  }
}

Tensor Augmenter::weak(const Tensor& batch, Rng& rng) const {
  check(batch);
  Tensor out = batch;
  const std::size_t d = geometry_.features();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    float* sample = out.data() + r * d;
    if (geometry_.is_image()) {
      weak_image(sample, rng);
    } else {
      const float lo = range_.lo[0], hi = range_.hi[0];
      for (std::size_t i = 0; i < d; ++i)
        sample[i] = std::clamp(sample[i] + float(options_.weak_jitter * (hi - lo) * rng.normal()), lo, hi);
    }
  }
  return out;
}

Tensor Augmenter::strong(const Tensor& batch, Rng& rng) const {
  check(batch);
  Tensor out = batch;
  const std::size_t d = geometry_.features();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    float* sample = out.data() + r * d;
    if (geometry_.is_image()) {
      strong_image(sample, rng);
    } else {
      const float lo = range_.lo[0], hi = range_.hi[0];
      for (std::size_t i = 0; i < d; ++i) {
        if (rng.bernoulli(options_.strong_dropout)) sample[i] = lo + 0.5f * (hi - lo);
        else sample[i] = std::clamp(sample[i] + float(options_.strong_jitter * (hi - lo) * rng.normal()), lo, hi);
      }
    }
  }
  return out;
}

}  // namespace vfl::data
