// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <utility>

#include "mtp/annotation/geometry.hpp"
#include "mtp/annotation/mtsd_io.hpp"
#include "mtp/annotation/sample.hpp"
#include "test_util.hpp"

using namespace mtp;
using namespace mtp::annotation;

namespace {

using PixelSet = std::set<std::pair<std::size_t, std::size_t>>;

PixelSet pixels(const Mask& m) {
  PixelSet out;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(x, y)) out.insert({x, y});
  return out;
}

// Corners of the box from its edge directions, then a point-in-convex-polygon
// test with signed edge distances. Shares no code with the rasterizer.
Mask polygon_oracle(const RotatedBox& b, std::size_t h, std::size_t w) {
  const double ux = std::cos(b.theta), uy = std::sin(b.theta);  // width direction
  const double vx = -std::sin(b.theta), vy = std::cos(b.theta);  // height direction
  std::array<std::array<double, 2>, 4> p;
  const double sx[4] = {-1, 1, 1, -1}, sy[4] = {-1, -1, 1, 1};
  for (int k = 0; k < 4; ++k) {
    p[k] = {b.cx + sx[k] * b.w / 2 * ux + sy[k] * b.h / 2 * vx, b.cy + sx[k] * b.w / 2 * uy + sy[k] * b.h / 2 * vy};
  }
  Mask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      bool inside = true;
      for (int k = 0; k < 4 && inside; ++k) {
        const auto& a = p[k];
        const auto& c = p[(k + 1) % 4];
        const double ex = c[0] - a[0], ey = c[1] - a[1];
        const double len = std::hypot(ex, ey);
        // Corners run counter-clockwise in (x, y); interior has cross >= 0.
        const double cross = (ex * (static_cast<double>(y) - a[1]) - ey * (static_cast<double>(x) - a[0])) / len;
        inside = cross >= -kEdgeTolerance;
      }
      m.at(x, y) = inside;
    }
  }
  return m;
}

HBox scan_extent(const Mask& m) {
  HBox b{1 << 30, 1 << 30, -1, -1};
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (!m.bits[i]) continue;
    const int x = static_cast<int>(i % m.width), y = static_cast<int>(i / m.width);
    b.x_min = std::min(b.x_min, x);
    b.x_max = std::max(b.x_max, x);
    b.y_min = std::min(b.y_min, y);
    b.y_max = std::max(b.y_max, y);
  }
  return b;
}

RotatedBox random_box(Rng& rng, double side) {
  RotatedBox b;
  b.cx = rng.uniform(-4.0, side + 4.0);
  b.cy = rng.uniform(-4.0, side + 4.0);
  b.w = rng.uniform(0.3, side);
  b.h = rng.uniform(0.3, side);
  b.theta = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
  return b;
}

}  // namespace

TEST(Rasterize, AxisAlignedExample) {
  EXPECT_EQ(pixels(rasterize_rbox({2, 2, 3, 1, 0, 0}, 5, 5)), (PixelSet{{1, 2}, {2, 2}, {3, 2}}));
}

TEST(Rasterize, QuarterTurnSwapsFootprint) {
  const Mask m = rasterize_rbox({2, 2, 3, 1, normalize_angle(std::numbers::pi / 2), 0}, 5, 5);
  EXPECT_EQ(pixels(m), (PixelSet{{2, 1}, {2, 2}, {2, 3}}));
}

TEST(Rasterize, DiamondAtFortyFiveDegrees) {
  const double d = 2 * std::sqrt(2.0);
  const Mask m = rasterize_rbox({3, 3, d, d, std::numbers::pi / 4, 0}, 7, 7);
  PixelSet want;
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x)
      if (std::abs(x - 3) + std::abs(y - 3) <= 2) want.insert({x, y});
  EXPECT_EQ(pixels(m), want);
  EXPECT_EQ(m, polygon_oracle({3, 3, d, d, std::numbers::pi / 4, 0}, 7, 7));
}

TEST(Rasterize, OffGridBoxGivesEmptyMask) {
  EXPECT_TRUE(rasterize_rbox({-10, -10, 2, 2, 0.3, 0}, 8, 8).empty());
}

TEST(Rasterize, MatchesPolygonOracleOnRandomBoxes) {
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 1 + rng.uniform_index(64), w = 1 + rng.uniform_index(64);
    const RotatedBox b = random_box(rng, static_cast<double>(std::max(h, w)));
    ASSERT_EQ(rasterize_rbox(b, h, w), polygon_oracle(b, h, w)) << "trial " << trial;
  }
}

TEST(Rasterize, HalfTurnLeavesExtentUnchanged) {
  Rng rng(202);
  int nonempty = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    RotatedBox b = random_box(rng, 48);
    const Mask a = rasterize_rbox(b, 48, 48);
    b.theta += std::numbers::pi;
    const Mask c = rasterize_rbox(b, 48, 48);
    if (a.empty()) {
      EXPECT_TRUE(c.empty());
      continue;
    }
    ++nonempty;
    ASSERT_EQ(min_hbox(a), min_hbox(c)) << "trial " << trial;
    b.theta = normalize_angle(b.theta);
    ASSERT_EQ(min_hbox(a), min_hbox(rasterize_rbox(b, 48, 48)));
  }
  EXPECT_GT(nonempty, 500);
}

TEST(Rasterize, UnrotatedExtentIsAnalytic) {
  Rng rng(303);
  for (int trial = 0; trial < 1000; ++trial) {
    RotatedBox b{rng.uniform(10.0, 54.0), rng.uniform(10.0, 54.0), rng.uniform(1.0, 18.0),
                 rng.uniform(1.0, 18.0), 0.0, 0};
    const HBox got = min_hbox(rasterize_rbox(b, 64, 64));
    const HBox want{static_cast<int>(std::ceil(b.cx - b.w / 2)), static_cast<int>(std::ceil(b.cy - b.h / 2)),
                    static_cast<int>(std::floor(b.cx + b.w / 2)), static_cast<int>(std::floor(b.cy + b.h / 2))};
    ASSERT_EQ(got, want) << "trial " << trial;
  }
}

TEST(NormalizeAngle, LandsInHalfOpenRange) {
  for (double t : {-10.0, -std::numbers::pi / 2, 0.0, std::numbers::pi / 2, 3.0, 7.5}) {
    const double n = normalize_angle(t);
    EXPECT_GE(n, -std::numbers::pi / 2);
    EXPECT_LT(n, std::numbers::pi / 2);
    EXPECT_NEAR(std::remainder(n - t, std::numbers::pi), 0.0, 1e-12);
  }
}

TEST(MinHBox, Examples) {
  Mask m(5, 5);
  m.at(1, 2) = m.at(2, 2) = m.at(3, 2) = 1;
  EXPECT_EQ(min_hbox(m), (HBox{1, 2, 3, 2}));
  Mask one(8, 8);
  one.at(4, 5) = 1;
  EXPECT_EQ(min_hbox(one), (HBox{4, 5, 4, 5}));
  EXPECT_THROW(min_hbox(Mask(3, 3)), EmptyAnnotationError);
}

TEST(MinHBox, MatchesFullScanOnRandomMasks) {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    Mask m(64, 64);
    const double density = rng.uniform(0.0005, 0.05);
    for (auto& b : m.bits) b = rng.uniform() < density;
    if (m.empty()) m.at(rng.uniform_index(64), rng.uniform_index(64)) = 1;
    ASSERT_EQ(min_hbox(m), scan_extent(m)) << "trial " << trial;
  }
}

TEST(ComposeSemantic, Examples) {
  const SemanticMap none = compose_semantic({}, 4, 5);
  EXPECT_EQ(none.labels, std::vector<std::uint8_t>(20, kIgnoreLabel));

  Mask a(4, 4), b(4, 4);
  a.at(0, 0) = a.at(1, 0) = a.at(1, 1) = 1;
  const SemanticMap one = compose_semantic({{&a, 3}}, 4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(one.at(x, y), a.at(x, y) ? 3 : kIgnoreLabel);

  b.at(1, 1) = b.at(2, 2) = 1;
  const SemanticMap two = compose_semantic({{&a, 1}, {&b, 2}}, 4, 4);
  EXPECT_EQ(two.at(1, 1), 2);
  EXPECT_EQ(two.at(0, 0), 1);
  EXPECT_EQ(two.at(2, 2), 2);
  EXPECT_EQ(two.at(3, 3), kIgnoreLabel);
}

TEST(ComposeSemantic, ClassCountsMatchScanAccounting) {
  Rng rng(505);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6);
    std::vector<Mask> masks;
    std::vector<std::size_t> classes;
    for (std::size_t i = 0; i < n; ++i) {
      RotatedBox b = random_box(rng, 32);
      masks.push_back(rasterize_rbox(b, 32, 32));
      classes.push_back(rng.uniform_index(4));
    }
    std::vector<ClassMask> items;
    for (std::size_t i = 0; i < n; ++i) items.push_back({&masks[i], classes[i]});
    const SemanticMap sem = compose_semantic(items, 32, 32);
    // Per pixel, the owner is the last mask covering it; count owners by class.
    std::array<std::size_t, 5> want{};
    for (std::size_t p = 0; p < 32 * 32; ++p) {
      std::size_t owner = 4;
      for (std::size_t i = 0; i < n; ++i)
        if (masks[i].bits[p]) owner = classes[i];
      ++want[owner];
    }
    std::array<std::size_t, 5> got{};
    for (auto v : sem.labels) ++got[v == kIgnoreLabel ? 4 : v];
    ASSERT_EQ(got, want) << "trial " << trial;
  }
}

TEST(BuildSample, AxisAlignedBox) {
  const auto s = build_sample({{5, 6, 4, 2, 0, 1}}, Tensor({3, 16, 16}), Stream::kSior);
  ASSERT_EQ(s.instances.size(), 1u);
  EXPECT_EQ(s.instances[0].hbox, (HBox{3, 5, 7, 7}));
  EXPECT_EQ(s.instances[0].class_id, 1u);
  EXPECT_EQ(s.stream, Stream::kSior);
  EXPECT_TRUE(audit_sample(s, 2).empty());
}

TEST(BuildSample, RotatedBoxUsesDiamondExtent) {
  const double d = 2 * std::sqrt(2.0);
  const RotatedBox b{3, 3, d, d, std::numbers::pi / 4, 0};
  const auto s = build_sample({b}, Tensor({1, 7, 7}), Stream::kSota);
  EXPECT_EQ(s.instances[0].hbox, scan_extent(polygon_oracle(b, 7, 7)));
  EXPECT_EQ(s.instances[0].hbox, (HBox{1, 1, 5, 5}));
}

TEST(BuildSample, DropsEmptyBoxesAndRejectsAllEmpty) {
  const auto s = build_sample({{-20, -20, 2, 2, 0, 0}, {4, 4, 3, 3, 0, 2}}, Tensor({1, 8, 8}), Stream::kFast);
  EXPECT_EQ(s.dropped, 1u);
  ASSERT_EQ(s.rboxes.size(), 1u);
  EXPECT_EQ(s.rboxes[0].class_id, 2u);
  EXPECT_THROW(build_sample({}, Tensor({1, 8, 8}), Stream::kFast), DegenerateSampleError);
  EXPECT_THROW(build_sample({{-20, -20, 2, 2, 0, 0}}, Tensor({1, 8, 8}), Stream::kFast), DegenerateSampleError);
}

TEST(BuildSample, AuditCatchesTampering) {
  auto s = build_sample({{5, 6, 4, 2, 0, 1}}, Tensor({3, 16, 16}), Stream::kSior);
  auto t = s;
  t.instances[0].hbox.x_max += 1;
  EXPECT_FALSE(audit_sample(t, 2).empty());
  t = s;
  t.semantic.labels[0] = 0;
  EXPECT_FALSE(audit_sample(t, 2).empty());
  EXPECT_FALSE(audit_sample(s, 1).empty());
}

TEST(Synth, DeterministicPerSeed) {
  SynthSpec spec;
  spec.seed = 7;
  const Dataset a = synth_dataset(spec), b = synth_dataset(spec);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(bit_equal(a.samples[i].image, b.samples[i].image));
    EXPECT_EQ(a.samples[i], b.samples[i]);
  }
  spec.seed = 8;
  EXPECT_FALSE(bit_equal(synth_dataset(spec).samples[0].image, a.samples[0].image));
}

TEST(Synth, SampleDependsOnlyOnSeedAndIndex) {
  SynthSpec spec;
  spec.seed = 11;
  spec.count = 6;
  const Dataset ds = synth_dataset(spec);
  EXPECT_EQ(synth_sample(spec, 4), ds.samples[4]);
}

TEST(Synth, RejectsBadRanges) {
  SynthSpec zero;
  zero.min_boxes = zero.max_boxes = 0;
  EXPECT_THROW(synth_dataset(zero), DegenerateSampleError);
  SynthSpec inverted;
  inverted.min_boxes = 3;
  inverted.max_boxes = 1;
  EXPECT_THROW(synth_dataset(inverted), ConfigError);
  SynthSpec no_classes;
  no_classes.classes = 0;
  EXPECT_THROW(synth_dataset(no_classes), ConfigError);
}

TEST(Synth, EverySampleSatisfiesInvariants) {
  SynthSpec spec{8, 32, 3, 4, 1, 3, Stream::kSota, 7};
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    spec.seed = seed;
    for (const auto& s : synth_dataset(spec).samples) {
      const auto bad = audit_sample(s, spec.classes);
      EXPECT_TRUE(bad.empty()) << bad.front();
      EXPECT_GE(s.rboxes.size(), 1u);
      EXPECT_LE(s.rboxes.size(), 3u);
    }
  }
}

TEST(Synth, BoxesBrightenTheImage) {
  SynthSpec spec;
  spec.seed = 3;
  for (const auto& s : synth_dataset(spec).samples) {
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t p = 0; p < s.semantic.labels.size(); ++p) {
      if (s.semantic.labels[p] == kIgnoreLabel) {
        out += s.image[p];
        ++n_out;
      } else {
        in += s.image[p];
        ++n_in;
      }
    }
    ASSERT_GT(n_in, 0u);
    if (n_out) {
      EXPECT_GT(in / n_in, out / n_out + 0.5);
    }
  }
}

TEST(Mtsd, RunLengthRoundTrip) {
  Rng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    Mask m(9, 13);
    for (auto& b : m.bits) b = rng.uniform() < 0.4;
    const auto runs = encode_runs(m);
    EXPECT_EQ(decode_runs(runs, 9, 13), m);
  }
  Mask full(2, 2);
  full.bits.assign(4, 1);
  EXPECT_EQ(encode_runs(full), (std::vector<std::uint32_t>{0, 4}));
}

TEST(Mtsd, BitExactRoundTrip) {
  SynthSpec spec;
  spec.seed = 21;
  spec.stream = Stream::kFast;
  const Dataset ds = synth_dataset(spec);
  std::stringstream a;
  write_dataset(a, ds);
  const std::string bytes = a.str();
  EXPECT_EQ(bytes.rfind("MTSD1 8 32 32 3 4 2\n", 0), 0u);
  std::istringstream in(bytes);
  const Dataset back = read_dataset(in);
  EXPECT_EQ(back, ds);
  std::stringstream b;
  write_dataset(b, back);
  EXPECT_EQ(b.str(), bytes);
}

TEST(Mtsd, CorruptInputNamesOffset) {
  SynthSpec spec;
  spec.count = 2;
  std::stringstream a;
  write_dataset(a, synth_dataset(spec));
  std::string bytes = a.str();
  {
    std::istringstream in("MTSD2 1 2 3\n");
    EXPECT_THROW(read_dataset(in), FormatError);
  }
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  try {
    read_dataset(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}
