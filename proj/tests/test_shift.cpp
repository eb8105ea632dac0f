#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/synth.hpp"
#include "uqcov/rng.hpp"
#include "uqcov/shift.hpp"

using namespace uqcov;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image im(h, w, 1);
  for (auto& p : im.pixels) p = rng.uniform();
  return im;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    m = std::max(m, std::fabs(a.pixels[i] - b.pixels[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("rotate: identity at 0, involution at 180 up to resampling") {
  const Image im = random_image(28, 28, 1);
  const Image same = rotate(im, 0.0);
  CHECK(max_abs_diff(im, same) == 0.0);

  const Image twice = rotate(rotate(im, 180.0), 180.0);
  CHECK(max_abs_diff(im, twice) < 2e-2);
}

TEST_CASE("rotate: 90-degree map of a single bright pixel") {
  Image im(28, 28, 1);
  im.at(0, 5, 20) = 1.0;
  const Image out = rotate(im, 90.0);
  // Inverse map at 90 degrees: out(r,c) samples in(13.5-(c-13.5), 13.5+(r-13.5)),
  // so the bright pixel lands at r = 13.5 + (20-13.5) = 20, c = 13.5 - (5-13.5) = 22.
  CHECK(out.at(0, 20, 22) == doctest::Approx(1.0).epsilon(1e-9));
  double total = 0.0;
  for (double p : out.pixels) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rotate: preserves shape and range") {
  const Image im = random_image(28, 28, 5);
  for (double deg : {15.0, 45.0, 137.0, 301.5}) {
    const Image out = rotate(im, deg);
    CHECK(out.height == 28);
    CHECK(out.width == 28);
    for (double p : out.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
  CHECK_THROWS_AS(rotate(im, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(rotate(im, 360.0), std::invalid_argument);
}

TEST_CASE("roll: identities and exact composition") {
  const Image im = random_image(24, 28, 9);
  CHECK(max_abs_diff(roll(im, 0), im) == 0.0);
  CHECK(max_abs_diff(roll(im, 28), im) == 0.0);
  CHECK(max_abs_diff(roll(roll(im, 14), 14), im) == 0.0);

  Rng rng(40);
  for (int rep = 0; rep < 10; ++rep) {
    const int a = static_cast<int>(rng.uniform_index(29));
    const int b = static_cast<int>(rng.uniform_index(29));
    const Image ab = roll(roll(im, a), b);
    const Image direct = roll(im, (a + b) % 28);
    CHECK(max_abs_diff(ab, direct) == 0.0);
  }

  // rolling right: the rightmost column becomes the leftmost
  const Image r1 = roll(im, 1);
  for (int r = 0; r < im.height; ++r) CHECK(r1.at(0, r, 0) == im.at(0, r, 27));
}

TEST_CASE("roll shift distance is maximal at width/2") {
  CHECK(roll_shift_distance(0, 28) == 0);
  CHECK(roll_shift_distance(14, 28) == 14);
  CHECK(roll_shift_distance(28, 28) == 0);
  for (int s = 0; s <= 28; ++s) {
    CHECK(roll_shift_distance(s, 28) <= 14);
    CHECK(roll_shift_distance(s, 28) == roll_shift_distance(28 - s, 28));
  }
}

TEST_CASE("corrupt: brightness clamps, severity tables are monotone") {
  Image half(8, 8, 1);
  for (auto& p : half.pixels) p = 0.5;
  const Image bright = corrupt(half, CorruptionKind::brightness, 5, 0);
  for (double p : bright.pixels) CHECK(p == 1.0);

  const CorruptionTables tables;
  for (auto kind : {CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
                    CorruptionKind::gaussian_blur, CorruptionKind::brightness}) {
    for (int s = 1; s < 5; ++s) CHECK(tables.value(kind, s) < tables.value(kind, s + 1));
  }
  // contrast scale decreases (stronger corruption), pixelate block grows
  for (int s = 1; s < 5; ++s) {
    CHECK(tables.value(CorruptionKind::contrast, s) > tables.value(CorruptionKind::contrast, s + 1));
    CHECK(tables.value(CorruptionKind::pixelate, s) < tables.value(CorruptionKind::pixelate, s + 1));
  }
}

TEST_CASE("corrupt: gaussian noise matches its sigma empirically") {
  Image flat(32, 32, 1);
  for (auto& p : flat.pixels) p = 0.5;
  const CorruptionTables tables;
  const double sigma = tables.value(CorruptionKind::gaussian_noise, 3);
  const Image noisy = corrupt(flat, CorruptionKind::gaussian_noise, 3, 123);
  std::vector<double> deltas;
  for (std::size_t i = 0; i < flat.pixels.size(); ++i) {
    deltas.push_back(noisy.pixels[i] - 0.5);
  }
  const double sd = sample_stddev(deltas);
  CHECK(std::fabs(sd - sigma) < 0.1 * sigma);
}

TEST_CASE("corrupt: deterministic under fixed seed, distinct across seeds") {
  const Image im = random_image(16, 16, 3);
  const Image a = corrupt(im, CorruptionKind::impulse_noise, 4, 99);
  const Image b = corrupt(im, CorruptionKind::impulse_noise, 4, 99);
  CHECK(a.pixels == b.pixels);
  const Image c = corrupt(im, CorruptionKind::impulse_noise, 4, 100);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("corrupt: pixelate block structure, bad input errors") {
  const Image im = random_image(28, 28, 8);
  const Image px = corrupt(im, CorruptionKind::pixelate, 5, 0);  // block 7
  for (int br = 0; br < 4; ++br) {
    for (int bc = 0; bc < 4; ++bc) {
      const double v = px.at(0, br * 7, bc * 7);
      for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 7; ++c) CHECK(px.at(0, br * 7 + r, bc * 7 + c) == v);
      }
    }
  }
  CHECK_THROWS_AS(corrupt(im, CorruptionKind::pixelate, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(corrupt(im, CorruptionKind::pixelate, 6, 0), std::invalid_argument);
  CHECK_THROWS_AS(corruption_from_name("fog"), std::invalid_argument);
}

TEST_CASE("corrupt: blur and contrast keep range and shape") {
  const Image im = random_image(28, 28, 21);
  for (auto kind : {CorruptionKind::gaussian_blur, CorruptionKind::contrast}) {
    for (int s = 1; s <= 5; ++s) {
      const Image out = corrupt(im, kind, s, 7);
      CHECK(out.pixels.size() == im.pixels.size());
      for (double p : out.pixels) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    }
  }
}

TEST_CASE("shift_sweep: schedule order, counts, source untouched") {
  const ImageDataset data = testsupport::make_glyph_dataset(12, 7);
  const std::vector<double> before = data.images[0].pixels;

  std::vector<ShiftSpec> schedule;
  for (double deg : rotation_schedule()) schedule.push_back(ShiftSpec::rotation(deg));
  CHECK(schedule.size() == 12);

  const auto swept = shift_sweep(data, schedule, 0);
  CHECK(swept.size() == 12);
  for (std::size_t i = 0; i < swept.size(); ++i) {
    CHECK(swept[i].first.degrees == doctest::Approx(15.0 * (i + 1)));
    CHECK(swept[i].second.size() == data.size());
    CHECK(swept[i].second.labels == data.labels);
  }
  CHECK(data.images[0].pixels == before);

  CHECK(roll_schedule(28, 2).size() == 14);
  const auto empty = shift_sweep(data, {}, 0);
  CHECK(empty.empty());
}

TEST_CASE("shift_sweep: noise corruption seeds by image index") {
  const ImageDataset data = testsupport::make_glyph_dataset(4, 11);
  const auto a = shift_sweep(data, {ShiftSpec::corrupt(CorruptionKind::gaussian_noise, 2)}, 50);
  const auto b = shift_sweep(data, {ShiftSpec::corrupt(CorruptionKind::gaussian_noise, 2)}, 50);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(a[0].second.images[i].pixels == b[0].second.images[i].pixels);
  }
  // per-image seeds differ, so two images of identical content corrupt differently
  ImageDataset same2;
  same2.num_classes = 2;
  same2.labels = {0, 0};
  same2.images.assign(2, data.images[0]);
  const auto c = shift_sweep(same2, {ShiftSpec::corrupt(CorruptionKind::gaussian_noise, 2)}, 50);
  CHECK(c[0].second.images[0].pixels != c[0].second.images[1].pixels);
}
