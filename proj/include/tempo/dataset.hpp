#ifndef TEMPO_DATASET_HPP
#define TEMPO_DATASET_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempo/common.hpp"
#include "tempo/nn.hpp"
#include "tempo/tensor.hpp"

namespace tempo {

// A t x c x h x w pixel clip in [0, 255]. Single images are t == 1 clips.
struct VideoClip {
  Tensor frames;  // [t x c x h x w]
  std::int64_t label = 0;
  std::vector<std::int64_t> frame_times;

  VideoClip() = default;
  VideoClip(Tensor f, std::int64_t lab) : frames(std::move(f)), label(lab) {
    if (frames.ndim() != 4) throw DimensionError("VideoClip: frames must be [t x c x h x w]");
    if (frames.dim(0) < 1) throw DimensionError("VideoClip: need at least one frame");
    for (double v : frames.data())
      if (v < 0.0 || v > 255.0) throw ContractError("VideoClip: pixel outside [0, 255]");
  }

  std::int64_t t() const { return frames.dim(0); }
  std::int64_t channels() const { return frames.dim(1); }
  std::int64_t height() const { return frames.dim(2); }
  std::int64_t width() const { return frames.dim(3); }

  Tensor frame(std::int64_t i) const {
    const std::int64_t c = channels(), h = height(), w = width();
    if (i < 0 || i >= t()) throw ContractError("VideoClip: frame index out of range");
    const auto* base = frames.data().data() + i * c * h * w;
    return Tensor::from({c, h, w}, std::vector<double>(base, base + c * h * w));
  }
};

struct VideoDataset {
  std::vector<VideoClip> clips;
  std::int64_t num_classes = 0;
  nlohmann::json spec;  // generator name + arguments; enough to regenerate
};

struct ShapeKind {
  enum Value { kSquare = 0, kCircle = 1, kTriangle = 2, kCross = 3 };
  static constexpr std::int64_t kCount = 4;
};

struct MotionKind {
  enum Value {
    kLeft = 0,
    kRight = 1,
    kUp = 2,
    kDown = 3,
    kClockwise = 4,
    kCounterClockwise = 5,
    kGrow = 6,
    kShrink = 7
  };
  static constexpr std::int64_t kCount = 8;
};

namespace detail {

// 4x supersampled rasterization of one frame; all geometry in pixel units.
inline Tensor raster_frame(int shape, double cx, double cy, double s,
                           std::int64_t r, std::int64_t channels,
                           const std::vector<double>& chan_intensity) {
  constexpr std::int64_t kSS = 4;
  const std::int64_t rs = r * kSS;
  std::vector<double> cover(static_cast<std::size_t>(r * r), 0.0);
  auto inside = [&](double x, double y) -> bool {
    const double dx = x - cx, dy = y - cy;
    switch (shape) {
      case ShapeKind::kSquare:
        return std::abs(dx) <= s && std::abs(dy) <= s;
      case ShapeKind::kCircle:
        return dx * dx + dy * dy <= s * s;
      case ShapeKind::kTriangle: {
        // isoceles, apex up: base at cy + s, apex at cy - s
        const double fy = (y - (cy - s)) / (2.0 * s);
        return fy >= 0.0 && fy <= 1.0 && std::abs(dx) <= s * fy;
      }
      case ShapeKind::kCross:
        return (std::abs(dx) <= s / 3.0 && std::abs(dy) <= s) ||
               (std::abs(dx) <= s && std::abs(dy) <= s / 3.0);
      default:
        return false;
    }
  };
  const double inv = 1.0 / static_cast<double>(kSS * kSS);
  for (std::int64_t yy = 0; yy < rs; ++yy) {
    const double y = (static_cast<double>(yy) + 0.5) / kSS;
    for (std::int64_t xx = 0; xx < rs; ++xx) {
      const double x = (static_cast<double>(xx) + 0.5) / kSS;
      if (inside(x, y)) cover[(yy / kSS) * r + (xx / kSS)] += inv;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(channels * r * r));
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < r * r; ++i) out[c * r * r + i] = cover[i] * chan_intensity[c];
  return Tensor::from({channels, r, r}, std::move(out));
}

inline std::vector<double> random_color(Rng& rng, std::int64_t channels) {
  std::vector<double> col(static_cast<std::size_t>(channels));
  for (auto& v : col) v = rng.uniform(100.0, 255.0);
  return col;
}

}  // namespace detail

// Static shape classification images (C_s = 4), class-balanced, deterministic
// in seed.
inline VideoDataset gen_shape_images(std::int64_t n, std::int64_t r, std::uint64_t seed,
                                     std::int64_t channels = 3) {
  if (n < 1) throw ConfigError("gen_shape_images: n must be >= 1");
  VideoDataset ds;
  ds.num_classes = ShapeKind::kCount;
  ds.spec = {{"kind", "shape_images"}, {"n", n}, {"r", r}, {"seed", seed}, {"channels", channels}};
  Rng rng(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    const int shape = static_cast<int>(i % ShapeKind::kCount);
    const double s = rng.uniform(0.15, 0.30) * static_cast<double>(r);
    const double cx = rng.uniform(s + 1.0, static_cast<double>(r) - s - 1.0);
    const double cy = rng.uniform(s + 1.0, static_cast<double>(r) - s - 1.0);
    const auto col = detail::random_color(rng, channels);
    Tensor img = detail::raster_frame(shape, cx, cy, s, r, channels, col);
    ds.clips.emplace_back(reshape(img, {1, channels, r, r}).detach(), shape);
  }
  return ds;
}

// Moving-shape clips labeled by motion (C_t = 8). The label is recoverable
// only across frames: every frame in isolation is a random shape at a random
// position and size.
inline VideoDataset gen_motion_clips(std::int64_t n, std::int64_t t, std::int64_t r,
                                     double delta, std::uint64_t seed,
                                     std::int64_t channels = 3) {
  if (t < 2) throw ConfigError("gen_motion_clips: t must be >= 2");
  if (delta < 1.0) throw ConfigError("gen_motion_clips: delta must be >= 1");
  VideoDataset ds;
  ds.num_classes = MotionKind::kCount;
  ds.spec = {{"kind", "motion_clips"}, {"n", n},    {"t", t},
             {"r", r},                 {"delta", delta}, {"seed", seed},
             {"channels", channels}};
  Rng rng(seed);
  const double rr = static_cast<double>(r);
  for (std::int64_t i = 0; i < n; ++i) {
    const int motion = static_cast<int>(i % MotionKind::kCount);
    const int shape = static_cast<int>(rng.uniform_int(ShapeKind::kCount));
    const auto col = detail::random_color(rng, channels);

    // per-frame (cx, cy, s); re-sample the start until the whole trajectory
    // stays inside the canvas
    std::vector<double> cxs(t), cys(t), ss(t);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw ConfigError("gen_motion_clips: canvas too small for trajectory");
      const double s = rng.uniform(0.10, 0.22) * rr;
      double cx = rng.uniform(0.0, rr), cy = rng.uniform(0.0, rr);
      bool ok = true;
      for (std::int64_t f = 0; f < t && ok; ++f) {
        double x = cx, y = cy, sz = s;
        switch (motion) {
          case MotionKind::kLeft: x = cx - delta * f; break;
          case MotionKind::kRight: x = cx + delta * f; break;
          case MotionKind::kUp: y = cy - delta * f; break;
          case MotionKind::kDown: y = cy + delta * f; break;
          case MotionKind::kClockwise:
          case MotionKind::kCounterClockwise: {
            // orbit of radius rho about a random pivot; arc step ~ delta px
            break;  // handled below
          }
          case MotionKind::kGrow: sz = s + 0.5 * delta * static_cast<double>(f); break;
          case MotionKind::kShrink:
            // same size range as grow, traversed in reverse
            sz = s + 0.5 * delta * static_cast<double>(t - 1 - f);
            break;
        }
        cxs[f] = x;
        cys[f] = y;
        ss[f] = sz;
        if (sz < 2.0 || x - sz < 1.0 || x + sz > rr - 1.0 || y - sz < 1.0 || y + sz > rr - 1.0)
          ok = false;
      }
      if (motion == MotionKind::kClockwise || motion == MotionKind::kCounterClockwise) {
        const double rho = rng.uniform(0.55, 0.9) * delta * static_cast<double>(t) / 2.0;
        const double dth = delta / rho * (motion == MotionKind::kClockwise ? 1.0 : -1.0);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        ok = true;
        for (std::int64_t f = 0; f < t && ok; ++f) {
          const double th = phase + dth * static_cast<double>(f);
          cxs[f] = cx + rho * std::cos(th);
          cys[f] = cy + rho * std::sin(th);
          ss[f] = s;
          if (cxs[f] - s < 1.0 || cxs[f] + s > rr - 1.0 || cys[f] - s < 1.0 ||
              cys[f] + s > rr - 1.0)
            ok = false;
        }
      }
      if (ok) break;
    }

    std::vector<double> pixels;
    pixels.reserve(static_cast<std::size_t>(t * channels * r * r));
    for (std::int64_t f = 0; f < t; ++f) {
      Tensor fr = detail::raster_frame(shape, cxs[f], cys[f], ss[f], r, channels, col);
      pixels.insert(pixels.end(), fr.data().begin(), fr.data().end());
    }
    ds.clips.emplace_back(Tensor::from({t, channels, r, r}, std::move(pixels)), motion);
  }
  return ds;
}

struct PrimitiveKind {
  enum Value { kBox = 0, kSphere = 1, kPyramid = 2, kRing = 3 };
  static constexpr std::int64_t kCount = 4;
};

namespace detail {

// Orthographic silhouette of a rotating primitive at azimuth theta.
inline Tensor raster_view(int prim, double theta, double cx, double cy, double s,
                          std::int64_t r, std::int64_t channels,
                          const std::vector<double>& col) {
  constexpr std::int64_t kSS = 4;
  const std::int64_t rs = r * kSS;
  const double wfac = std::abs(std::cos(theta)) + std::abs(std::sin(theta));
  std::vector<double> cover(static_cast<std::size_t>(r * r), 0.0);
  auto inside = [&](double x, double y) -> bool {
    const double dx = x - cx, dy = y - cy;
    switch (prim) {
      case PrimitiveKind::kBox:
        // unit cube rotated about the vertical axis: rectangle of width
        // s * (|cos| + |sin|), height s (half-extents)
        return std::abs(dx) <= s * wfac * 0.5 && std::abs(dy) <= s * 0.5;
      case PrimitiveKind::kSphere:
        return dx * dx + dy * dy <= 0.25 * s * s;
      case PrimitiveKind::kPyramid: {
        const double fy = (y - (cy - 0.5 * s)) / s;  // 0 at apex, 1 at base
        return fy >= 0.0 && fy <= 1.0 && std::abs(dx) <= 0.5 * s * wfac * fy;
      }
      case PrimitiveKind::kRing: {
        // ring whose plane contains the rotation axis: ellipse annulus
        const double ax = std::max(std::abs(std::cos(theta)), 0.15) * 0.5 * s;
        const double ay = 0.5 * s;
        const double e = (dx / ax) * (dx / ax) + (dy / ay) * (dy / ay);
        return e <= 1.0 && e >= 0.36;  // inner radius 60%
      }
      default:
        return false;
    }
  };
  const double inv = 1.0 / static_cast<double>(kSS * kSS);
  for (std::int64_t yy = 0; yy < rs; ++yy) {
    const double y = (static_cast<double>(yy) + 0.5) / kSS;
    for (std::int64_t xx = 0; xx < rs; ++xx) {
      const double x = (static_cast<double>(xx) + 0.5) / kSS;
      if (inside(x, y)) cover[(yy / kSS) * r + (xx / kSS)] += inv;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(channels * r * r));
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < r * r; ++i) out[c * r * r + i] = cover[i] * col[c];
  return Tensor::from({channels, r, r}, std::move(out));
}

}  // namespace detail

// Multi-view "clips": t orthographic silhouettes of a 3D primitive at equal
// azimuth steps. Label = primitive id.
inline VideoDataset gen_multiview_clips(std::int64_t n, std::int64_t t, std::int64_t r,
                                        std::uint64_t seed, std::int64_t channels = 3) {
  if (t < 2) throw ConfigError("gen_multiview_clips: t must be >= 2");
  VideoDataset ds;
  ds.num_classes = PrimitiveKind::kCount;
  ds.spec = {{"kind", "multiview_clips"}, {"n", n}, {"t", t}, {"r", r},
             {"seed", seed},              {"channels", channels}};
  Rng rng(seed);
  const double rr = static_cast<double>(r);
  for (std::int64_t i = 0; i < n; ++i) {
    const int prim = static_cast<int>(i % PrimitiveKind::kCount);
    const double s = rng.uniform(0.3, 0.5) * rr;  // full extent
    const double cx = rng.uniform(0.75 * s, rr - 0.75 * s);
    const double cy = rng.uniform(0.75 * s, rr - 0.75 * s);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const auto col = detail::random_color(rng, channels);
    std::vector<double> pixels;
    pixels.reserve(static_cast<std::size_t>(t * channels * r * r));
    for (std::int64_t v = 0; v < t; ++v) {
      const double theta = phase + 6.283185307179586 * static_cast<double>(v) / static_cast<double>(t);
      Tensor fr = detail::raster_view(prim, theta, cx, cy, s, r, channels, col);
      pixels.insert(pixels.end(), fr.data().begin(), fr.data().end());
    }
    ds.clips.emplace_back(Tensor::from({t, channels, r, r}, std::move(pixels)), prim);
  }
  return ds;
}

// Bilinear-downsampled copies of a dataset at each requested resolution.
// Labels preserved; the base-resolution entry is bit-identical to the input.
inline std::map<std::int64_t, VideoDataset> multiscale_variants(
    const VideoDataset& ds, const std::vector<std::int64_t>& resolutions) {
  std::map<std::int64_t, VideoDataset> out;
  for (auto res : resolutions) {
    VideoDataset scaled;
    scaled.num_classes = ds.num_classes;
    scaled.spec = ds.spec;
    scaled.spec["rescaled_to"] = res;
    for (const auto& clip : ds.clips) {
      const std::int64_t t = clip.t(), c = clip.channels();
      std::vector<double> pixels;
      pixels.reserve(static_cast<std::size_t>(t * c * res * res));
      for (std::int64_t f = 0; f < t; ++f) {
        Tensor fr = bilinear_resize(clip.frame(f), res, res);
        pixels.insert(pixels.end(), fr.data().begin(), fr.data().end());
      }
      VideoClip sc;
      sc.frames = Tensor::from({t, c, res, res}, std::move(pixels));
      sc.label = clip.label;
      sc.frame_times = clip.frame_times;
      scaled.clips.push_back(std::move(sc));
    }
    out[res] = std::move(scaled);
  }
  return out;
}

// Regenerate a dataset from its manifest spec; bit-identical by construction.
inline VideoDataset regenerate(const nlohmann::json& spec) {
  const std::string kind = spec.at("kind");
  if (kind == "shape_images")
    return gen_shape_images(spec.at("n"), spec.at("r"), spec.at("seed"), spec.at("channels"));
  if (kind == "motion_clips")
    return gen_motion_clips(spec.at("n"), spec.at("t"), spec.at("r"), spec.at("delta"),
                            spec.at("seed"), spec.at("channels"));
  if (kind == "multiview_clips")
    return gen_multiview_clips(spec.at("n"), spec.at("t"), spec.at("r"), spec.at("seed"),
                               spec.at("channels"));
  throw ConfigError("regenerate: unknown dataset kind '" + kind + "'");
}

}  // namespace tempo

#endif  // TEMPO_DATASET_HPP
