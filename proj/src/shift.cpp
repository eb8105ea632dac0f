#include "uqcov/shift.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uqcov/rng.hpp"

namespace uqcov {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void check_severity(int severity) {
  if (severity < 1 || severity > 5) {
    throw std::invalid_argument("corrupt: severity must be in 1..5");
  }
}

}  // namespace

CorruptionKind corruption_from_name(const std::string& name) {
  if (name == "gaussian_noise") return CorruptionKind::gaussian_noise;
  if (name == "impulse_noise") return CorruptionKind::impulse_noise;
  if (name == "gaussian_blur") return CorruptionKind::gaussian_blur;
  if (name == "brightness") return CorruptionKind::brightness;
  if (name == "contrast") return CorruptionKind::contrast;
  if (name == "pixelate") return CorruptionKind::pixelate;
  throw std::invalid_argument("unknown corruption kind: " + name);
}

std::string corruption_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::pixelate: return "pixelate";
  }
  throw std::invalid_argument("unknown corruption kind");
}

double CorruptionTables::value(CorruptionKind kind, int severity) const {
  check_severity(severity);
  const int i = severity - 1;
  switch (kind) {
    case CorruptionKind::gaussian_noise: return gaussian_noise_sigma[i];
    case CorruptionKind::impulse_noise: return impulse_noise_fraction[i];
    case CorruptionKind::gaussian_blur: return gaussian_blur_sigma[i];
    case CorruptionKind::brightness: return brightness_delta[i];
    case CorruptionKind::contrast: return contrast_scale[i];
    case CorruptionKind::pixelate: return static_cast<double>(pixelate_block[i]);
  }
  throw std::invalid_argument("unknown corruption kind");
}

ShiftSpec ShiftSpec::rotation(double deg) {
  ShiftSpec s;
  s.kind = Kind::rotation;
  s.degrees = deg;
  return s;
}

ShiftSpec ShiftSpec::roll(int px) {
  ShiftSpec s;
  s.kind = Kind::roll_translation;
  s.pixels = px;
  return s;
}

ShiftSpec ShiftSpec::corrupt(CorruptionKind kind, int severity) {
  check_severity(severity);
  ShiftSpec s;
  s.kind = Kind::corruption;
  s.corruption = kind;
  s.severity = severity;
  return s;
}

std::string ShiftSpec::describe() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::rotation: {
      const auto deg = static_cast<long long>(std::llround(degrees));
      if (std::fabs(degrees - static_cast<double>(deg)) < 1e-9) {
        return "rotation_" + std::to_string(deg);
      }
      return "rotation_" + std::to_string(degrees);
    }
    case Kind::roll_translation: return "roll_" + std::to_string(pixels);
    case Kind::corruption: return corruption_name(corruption);
  }
  return "none";
}

Image rotate(const Image& img, double degrees) {
  if (degrees < 0.0 || degrees >= 360.0) {
    throw std::invalid_argument("rotate: degrees must be in [0,360)");
  }
  if (degrees == 0.0) return img;
  const double theta = degrees * kPi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  Image out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r = 0; r < img.height; ++r) {
      const double dy = r - cy;
      for (int col = 0; col < img.width; ++col) {
        const double dx = col - cx;
        // Inverse map: source position that lands on (r, col).
        const double sx = c * dx + s * dy + cx;
        const double sy = -s * dx + c * dy + cy;
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        double acc = 0.0;
        for (int j = 0; j <= 1; ++j) {
          for (int i = 0; i <= 1; ++i) {
            const int yy = y0 + j, xx = x0 + i;
            if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) continue;
            const double w = (i ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
            acc += w * img.at(ch, yy, xx);
          }
        }
        out.at(ch, r, col) = clamp01(acc);
      }
    }
  }
  return out;
}

Image roll(const Image& img, int pixels) {
  if (pixels < 0 || pixels > img.width) {
    throw std::invalid_argument("roll: pixels must be in [0, width]");
  }
  const int w = img.width;
  const int s = pixels % w;
  if (s == 0) return img;
  Image out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < w; ++c) {
        out.at(ch, r, c) = img.at(ch, r, (c - s + w) % w);
      }
    }
  }
  return out;
}

namespace {

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const auto clampi = [](int v, int lo, int hi) { return std::min(hi, std::max(lo, v)); };
  Image tmp(img.height, img.width, img.channels);
  // Horizontal pass with edge replication, then vertical.
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * img.at(ch, r, clampi(c + i, 0, img.width - 1));
        }
        tmp.at(ch, r, c) = acc;
      }
    }
  }
  Image out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(ch, clampi(r + i, 0, img.height - 1), c);
        }
        out.at(ch, r, c) = clamp01(acc);
      }
    }
  }
  return out;
}

Image pixelate(const Image& img, int block) {
  Image out(img.height, img.width, img.channels);
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r0 = 0; r0 < img.height; r0 += block) {
      for (int c0 = 0; c0 < img.width; c0 += block) {
        const int r1 = std::min(r0 + block, img.height);
        const int c1 = std::min(c0 + block, img.width);
        double acc = 0.0;
        for (int r = r0; r < r1; ++r) {
          for (int c = c0; c < c1; ++c) acc += img.at(ch, r, c);
        }
        const double avg = acc / ((r1 - r0) * (c1 - c0));
        for (int r = r0; r < r1; ++r) {
          for (int c = c0; c < c1; ++c) out.at(ch, r, c) = avg;
        }
      }
    }
  }
  return out;
}

}  // namespace

Image corrupt(const Image& img, CorruptionKind kind, int severity,
              std::uint64_t seed, const CorruptionTables& tables) {
  check_severity(severity);
  const double param = tables.value(kind, severity);
  switch (kind) {
    case CorruptionKind::gaussian_noise: {
      Rng rng(seed);
      Image out = img;
      for (double& p : out.pixels) p = clamp01(p + rng.normal(0.0, param));
      return out;
    }
    case CorruptionKind::impulse_noise: {
      Rng rng(seed);
      Image out = img;
      for (double& p : out.pixels) {
        if (rng.bernoulli(param)) p = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
      return out;
    }
    case CorruptionKind::gaussian_blur:
      return gaussian_blur(img, param);
    case CorruptionKind::brightness: {
      Image out = img;
      for (double& p : out.pixels) p = clamp01(p + param);
      return out;
    }
    case CorruptionKind::contrast: {
      double m = 0.0;
      for (double p : img.pixels) m += p;
      m /= static_cast<double>(img.pixels.size());
      Image out = img;
      for (double& p : out.pixels) p = clamp01((p - m) * param + m);
      return out;
    }
    case CorruptionKind::pixelate:
      return pixelate(img, static_cast<int>(param));
  }
  throw std::invalid_argument("unknown corruption kind");
}

std::vector<double> rotation_schedule() {
  std::vector<double> out;
  for (int d = 15; d <= 180; d += 15) out.push_back(d);
  return out;
}

std::vector<int> roll_schedule(int width, int step) {
  if (step <= 0) throw std::invalid_argument("roll_schedule: step must be positive");
  std::vector<int> out;
  for (int s = step; s <= width; s += step) out.push_back(s);
  return out;
}

int roll_shift_distance(int pixels, int width) {
  const int s = ((pixels % width) + width) % width;
  return std::min(s, width - s);
}

std::vector<std::pair<ShiftSpec, ImageDataset>> shift_sweep(
    const ImageDataset& data, const std::vector<ShiftSpec>& schedule,
    std::uint64_t base_seed, const CorruptionTables& tables) {
  std::vector<std::pair<ShiftSpec, ImageDataset>> out;
  out.reserve(schedule.size());
  for (const ShiftSpec& spec : schedule) {
    ImageDataset shifted;
    shifted.name = data.name;
    shifted.num_classes = data.num_classes;
    shifted.labels = data.labels;
    shifted.images.reserve(data.images.size());
    for (std::size_t i = 0; i < data.images.size(); ++i) {
      const Image& img = data.images[i];
      switch (spec.kind) {
        case ShiftSpec::Kind::none:
          shifted.images.push_back(img);
          break;
        case ShiftSpec::Kind::rotation:
          shifted.images.push_back(rotate(img, spec.degrees));
          break;
        case ShiftSpec::Kind::roll_translation:
          shifted.images.push_back(roll(img, spec.pixels));
          break;
        case ShiftSpec::Kind::corruption:
          shifted.images.push_back(corrupt(img, spec.corruption, spec.severity,
                                           base_seed + i, tables));
          break;
      }
    }
    out.emplace_back(spec, std::move(shifted));
  }
  return out;
}

}  // namespace uqcov
