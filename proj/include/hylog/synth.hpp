// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural hazy scenes with exact reflectance/shading/clear ground truth,
// PPM image I/O and the dataset manifest.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hylog/tensor.hpp"

namespace hylog {

struct Image {
  std::size_t height = 0, width = 0, channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }

  bool operator==(const Image&) const = default;
};

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  std::vector<T> v(img.data.begin(), img.data.end());
  return Tensor<T>(Shape{img.height, img.width, img.channels}, std::move(v));
}

// Stacks equally sized images into (N, H, W, C).
template <typename T>
Tensor<T> to_batch(const std::vector<const Image*>& imgs) {
  const Image& f = *imgs.at(0);
  std::vector<T> v;
  v.reserve(imgs.size() * f.data.size());
  for (const Image* im : imgs) {
    if (im->height != f.height || im->width != f.width || im->channels != f.channels) {
      throw ShapeError("batch images differ in size");
    }
    v.insert(v.end(), im->data.begin(), im->data.end());
  }
  return Tensor<T>(Shape{imgs.size(), f.height, f.width, f.channels}, std::move(v));
}

// Converts (H,W,C) or one slice of (N,H,W,C) back to an image.
template <typename T>
Image from_tensor(const Tensor<T>& t, std::size_t index = 0) {
  const bool batched = t.rank() == 4;
  const std::size_t h = t.dim(batched ? 1 : 0), w = t.dim(batched ? 2 : 1), c = t.dim(batched ? 3 : 2);
  Image img(h, w, c);
  const std::size_t off = batched ? index * h * w * c : 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(t[off + i]);
  return img;
}

struct Sample {
  Image hazy, clear, reflectance, shading;
  Image depth;  // single channel
  std::array<double, 3> airlight{1, 1, 1};
  double beta = 1.0;
  std::uint64_t seed = 0;
};

// I = J * t + A * (1 - t), t = exp(-beta * depth), clamped to [0, 1].
inline Image apply_haze(const Image& clear, const Image& depth, const std::array<double, 3>& airlight, double beta) {
  if (beta < 0) throw std::invalid_argument("scattering coefficient must be nonnegative");
  if (depth.height != clear.height || depth.width != clear.width || depth.channels != 1) {
    throw ShapeError("depth map must be single-channel and match the image");
  }
  Image out(clear.height, clear.width, clear.channels);
  for (std::size_t y = 0; y < clear.height; ++y)
    for (std::size_t x = 0; x < clear.width; ++x) {
      const double d = depth.at(y, x, 0);
      if (d < 0) throw std::invalid_argument("depth must be nonnegative");
      const double t = std::exp(-beta * d);
      for (std::size_t c = 0; c < clear.channels; ++c) {
        const double v = clear.at(y, x, c) * t + airlight[c % 3] * (1.0 - t);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

// Inverts the scattering model given the transmission: J = (I - A) / t + A.
inline Image remove_haze(const Image& hazy, const Image& depth, const std::array<double, 3>& airlight, double beta) {
  Image out(hazy.height, hazy.width, hazy.channels);
  for (std::size_t y = 0; y < hazy.height; ++y)
    for (std::size_t x = 0; x < hazy.width; ++x) {
      const double t = std::exp(-beta * depth.at(y, x, 0));
      for (std::size_t c = 0; c < hazy.channels; ++c)
        out.at(y, x, c) = (hazy.at(y, x, c) - airlight[c % 3]) / t + airlight[c % 3];
    }
  return out;
}

namespace detail {

// Smooth random field in [0, 1]: a few low-frequency cosines, min-max scaled.
inline Image smooth_field(std::size_t h, std::size_t w, std::mt19937_64& rng, int waves) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image f(h, w, 1);
  std::vector<std::array<double, 4>> comps(static_cast<std::size_t>(waves));
  for (auto& c : comps) c = {u(rng) * 2.0 - 1.0, u(rng) * 2.0 - 1.0, u(rng) * 2 * std::numbers::pi, 0.5 + u(rng)};
  double lo = 1e300, hi = -1e300;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0;
      for (const auto& c : comps) {
        v += c[3] * std::cos(2 * std::numbers::pi * (c[0] * static_cast<double>(x) / static_cast<double>(w) +
                                                     c[1] * static_cast<double>(y) / static_cast<double>(h)) +
                             c[2]);
      }
      f.at(y, x, 0) = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  for (auto& v : f.data) v = (v - lo) / span;
  return f;
}

}  // namespace detail

// Procedural scene: piecewise-constant reflectance of colored rectangles
// and ellipses, smooth gray shading in [0.2, 1], a depth ramp with smooth
// variation normalized to [0, 3], near-achromatic airlight in [0.7, 1]
// and scattering coefficient in [0.4, 2.0]. Deterministic in the seed.
inline Sample synth_scene(std::uint64_t seed, std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  s.seed = seed;

  s.reflectance = Image(height, width, 3);
  const std::array<double, 3> bg{0.1 + 0.9 * u(rng), 0.1 + 0.9 * u(rng), 0.1 + 0.9 * u(rng)};
  for (std::size_t i = 0; i < height * width; ++i)
    for (std::size_t c = 0; c < 3; ++c) s.reflectance.data[i * 3 + c] = bg[c];
  const int shapes = 6 + static_cast<int>(u(rng) * 5);
  for (int k = 0; k < shapes; ++k) {
    const bool ellipse = u(rng) < 0.5;
    const double cx = u(rng) * static_cast<double>(width), cy = u(rng) * static_cast<double>(height);
    const double rx = (0.08 + 0.25 * u(rng)) * static_cast<double>(width);
    const double ry = (0.08 + 0.25 * u(rng)) * static_cast<double>(height);
    const std::array<double, 3> col{0.1 + 0.9 * u(rng), 0.1 + 0.9 * u(rng), 0.1 + 0.9 * u(rng)};
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx, dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) s.reflectance.at(y, x, c) = col[c];
      }
  }

  const Image light = detail::smooth_field(height, width, rng, 3);
  s.shading = Image(height, width, 3);
  for (std::size_t i = 0; i < height * width; ++i)
    for (std::size_t c = 0; c < 3; ++c) s.shading.data[i * 3 + c] = 0.2 + 0.8 * light.data[i];

  s.clear = Image(height, width, 3);
  for (std::size_t i = 0; i < s.clear.data.size(); ++i)
    s.clear.data[i] = std::clamp(s.reflectance.data[i] * s.shading.data[i], 0.0, 1.0);

  const double angle = u(rng) * 2 * std::numbers::pi;
  const Image wobble = detail::smooth_field(height, width, rng, 2);
  s.depth = Image(height, width, 1);
  double lo = 1e300, hi = -1e300;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double ramp = std::cos(angle) * static_cast<double>(x) / static_cast<double>(width) +
                          std::sin(angle) * static_cast<double>(y) / static_cast<double>(height);
      const double v = ramp + 0.3 * wobble.at(y, x, 0);
      s.depth.at(y, x, 0) = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  for (auto& v : s.depth.data) v = 3.0 * (v - lo) / span;

  const double base = 0.7 + 0.3 * u(rng);
  for (auto& a : s.airlight) a = std::clamp(base + (u(rng) - 0.5) * 0.05, 0.7, 1.0);
  s.beta = 0.4 + 1.6 * u(rng);
  s.hazy = apply_haze(s.clear, s.depth, s.airlight, s.beta);
  return s;
}

namespace detail {

// Maps output (y, x) to source coordinates under flips and k quarter turns.
inline Image transform_image(const Image& in, std::size_t top, std::size_t left, std::size_t size_h,
                             std::size_t size_w, bool flip_h, bool flip_v, int quarter_turns) {
  Image crop(size_h, size_w, in.channels);
  for (std::size_t y = 0; y < size_h; ++y)
    for (std::size_t x = 0; x < size_w; ++x) {
      const std::size_t sy = flip_v ? size_h - 1 - y : y;
      const std::size_t sx = flip_h ? size_w - 1 - x : x;
      for (std::size_t c = 0; c < in.channels; ++c) crop.at(y, x, c) = in.at(top + sy, left + sx, c);
    }
  Image cur = crop;
  for (int k = 0; k < quarter_turns; ++k) {
    Image rot(cur.width, cur.height, cur.channels);
    // 90 degrees counter-clockwise: out(y, x) = in(x, W - 1 - y)
    for (std::size_t y = 0; y < rot.height; ++y)
      for (std::size_t x = 0; x < rot.width; ++x)
        for (std::size_t c = 0; c < cur.channels; ++c) rot.at(y, x, c) = cur.at(x, cur.width - 1 - y, c);
    cur = std::move(rot);
  }
  return cur;
}

}  // namespace detail

struct AugmentParams {
  std::size_t top = 0, left = 0, crop_h = 0, crop_w = 0;
  bool flip_h = false, flip_v = false;
  int quarter_turns = 0;
};

// Applies one geometric transform to every aligned field of the sample.
inline Sample augment_with(const Sample& s, const AugmentParams& p) {
  if (p.crop_h == 0 || p.crop_w == 0 || p.top + p.crop_h > s.hazy.height || p.left + p.crop_w > s.hazy.width) {
    throw std::invalid_argument("crop window exceeds the image");
  }
  Sample out = s;
  auto tf = [&](const Image& im) {
    return detail::transform_image(im, p.top, p.left, p.crop_h, p.crop_w, p.flip_h, p.flip_v, p.quarter_turns);
  };
  out.hazy = tf(s.hazy);
  out.clear = tf(s.clear);
  out.reflectance = tf(s.reflectance);
  out.shading = tf(s.shading);
  out.depth = tf(s.depth);
  return out;
}

// Random crop (crop x crop, 0 = keep size), flips and quarter turns. Non-square
// crops are never produced, so rotations keep the shape.
inline Sample augment(const Sample& s, std::uint64_t seed, std::size_t crop = 0) {
  const std::size_t h = s.hazy.height, w = s.hazy.width;
  if (crop > h || crop > w) throw std::invalid_argument("crop larger than image");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> bit(0, 1), turns(0, 3);
  AugmentParams p;
  p.crop_h = crop ? crop : h;
  p.crop_w = crop ? crop : w;
  p.top = crop ? std::uniform_int_distribution<std::size_t>(0, h - crop)(rng) : 0;
  p.left = crop ? std::uniform_int_distribution<std::size_t>(0, w - crop)(rng) : 0;
  p.flip_h = bit(rng) == 1;
  p.flip_v = bit(rng) == 1;
  p.quarter_turns = (p.crop_h == p.crop_w) ? turns(rng) : 2 * bit(rng);
  return augment_with(s, p);
}

// ---- PPM (P6) -------------------------------------------------------------

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string encode_ppm(const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("PPM images must have 3 channels");
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(static_cast<char>(quantize(v)));
  return out;
}

// Writes via a temporary file and rename so readers never see partial files.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void save_image(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_ppm(img)); }

inline Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError("malformed PPM header");
    return std::stoul(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) file");
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (maxval != 255) throw FormatError("unsupported PPM maxval " + std::to_string(maxval));
  if (w == 0 || h == 0) throw FormatError("PPM image has zero extent");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("malformed PPM header");
  }
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw FormatError("truncated PPM payload");
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
  return img;
}

inline Image load_image(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

// ---- Manifest and dataset ------------------------------------------------

struct ManifestEntry {
  std::string stem;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::size_t height = 0, width = 0;

  std::vector<std::string> stems(const std::string& split) const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e.stem);
    return out;
  }
};

inline constexpr const char* kManifestHeader = "hylog-manifest v1";
inline constexpr const char* kManifestName = "manifest.txt";

// Header line, then "#seed", "#size" comment lines, then "stem<TAB>split".
inline std::string encode_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  os << "#seed\t" << m.seed << '\n';
  os << "#size\t" << m.height << 'x' << m.width << '\n';
  for (const auto& e : m.entries) os << e.stem << '\t' << e.split << '\n';
  return os.str();
}

inline DatasetManifest decode_manifest(const std::string& text, const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader) throw FormatError("bad manifest header");
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("malformed manifest line: " + line);
    const std::string key = line.substr(0, tab), val = line.substr(tab + 1);
    if (key == "#seed") {
      m.seed = std::stoull(val);
    } else if (key == "#size") {
      const auto x = val.find('x');
      if (x == std::string::npos) throw FormatError("malformed manifest size: " + val);
      m.height = std::stoul(val.substr(0, x));
      m.width = std::stoul(val.substr(x + 1));
    } else if (!key.empty() && key[0] == '#') {
      continue;
    } else {
      if (!seen.insert(key).second) throw FormatError("duplicate manifest stem: " + key);
      m.entries.push_back({key, val});
    }
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  auto m = decode_manifest(read_file(root / kManifestName), root);
  for (const auto& e : m.entries) {
    for (const char* suffix : {"_hazy.ppm", "_clear.ppm", "_reflectance.ppm", "_shading.ppm"}) {
      if (!std::filesystem::exists(root / (e.stem + suffix))) {
        throw FormatError("dataset file missing: " + (root / (e.stem + suffix)).string());
      }
    }
  }
  return m;
}

// Per-sample seed derived from the dataset seed and the sample index.
inline std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index) {
  std::uint64_t z = dataset_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::string format_meta(const Sample& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "seed=" << s.seed << "\nbeta=" << s.beta << "\nairlight=" << s.airlight[0] << ',' << s.airlight[1] << ','
     << s.airlight[2] << '\n';
  return os.str();
}

// Generates `train_count + test_count` scenes into `root` and writes the
// manifest. Output depends only on (seed, sizes, counts).
inline DatasetManifest generate_dataset(const std::filesystem::path& root, std::size_t train_count,
                                        std::size_t test_count, std::size_t height, std::size_t width,
                                        std::uint64_t seed) {
  std::filesystem::create_directories(root);
  DatasetManifest m;
  m.root = root;
  m.seed = seed;
  m.height = height;
  m.width = width;
  for (std::size_t i = 0; i < train_count + test_count; ++i) {
    std::ostringstream stem;
    stem << "scene" << std::setw(5) << std::setfill('0') << i;
    const Sample s = synth_scene(sample_seed(seed, i), height, width);
    save_image(root / (stem.str() + "_hazy.ppm"), s.hazy);
    save_image(root / (stem.str() + "_clear.ppm"), s.clear);
    save_image(root / (stem.str() + "_reflectance.ppm"), s.reflectance);
    save_image(root / (stem.str() + "_shading.ppm"), s.shading);
    write_file_atomic(root / (stem.str() + ".meta"), format_meta(s));
    m.entries.push_back({stem.str(), i < train_count ? "train" : "test"});
  }
  write_file_atomic(root / kManifestName, encode_manifest(m));
  return m;
}

// Training quadruple read back from disk (depth is not stored).
inline Sample load_sample(const DatasetManifest& m, const std::string& stem) {
  Sample s;
  s.hazy = load_image(m.root / (stem + "_hazy.ppm"));
  s.clear = load_image(m.root / (stem + "_clear.ppm"));
  s.reflectance = load_image(m.root / (stem + "_reflectance.ppm"));
  s.shading = load_image(m.root / (stem + "_shading.ppm"));
  s.depth = Image(s.hazy.height, s.hazy.width, 1);
  for (const Image* im : {&s.clear, &s.reflectance, &s.shading}) {
    if (im->height != s.hazy.height || im->width != s.hazy.width) {
      throw FormatError("sample " + stem + " has misaligned images");
    }
  }
  return s;
}

}  // namespace hylog
