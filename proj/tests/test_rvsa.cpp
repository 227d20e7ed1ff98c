// Copyright (c) 2026, The MTP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mtp/core/gradcheck.hpp"
#include "mtp/rvsa/config.hpp"
#include "mtp/rvsa/diff_ops.hpp"
#include "mtp/rvsa/layer.hpp"
#include "mtp/rvsa/window.hpp"
#include "test_util.hpp"

using namespace mtp;
using namespace mtp::rvsa;
using mtp::testing::random_tensor;

namespace {

// Bilinear value at (x, y) as a sum of tent-weighted lattice values over the
// whole map; independent of the floor/fraction formulation.
double tent_oracle(const Tensor& f, std::size_t c, double x, double y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.dim(1); ++i) {
    const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(i)));
    if (wy == 0.0) continue;
    for (std::size_t j = 0; j < f.dim(2); ++j) {
      const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(j)));
      acc += wy * wx * f.at(c, i, j);
    }
  }
  return acc;
}

// Sample locations written straight from the transform definition.
Point oracle_point(std::size_t r, std::size_t c, std::size_t s, std::size_t i, std::size_t j,
                   const WindowTransform& t) {
  const double half = (static_cast<double>(s) - 1.0) / 2.0;
  const double cx = static_cast<double>(c * s) + half, cy = static_cast<double>(r * s) + half;
  const double rx = static_cast<double>(j) - half, ry = static_cast<double>(i) - half;
  const double ct = std::cos(t.angle), st = std::sin(t.angle);
  return {cx + t.offset_x + ct * rx * t.scale_x + st * ry * t.scale_y,
          cy + t.offset_y - st * rx * t.scale_x + ct * ry * t.scale_y};
}

AttentionWeights random_weights(std::size_t dim, std::size_t heads, Rng& rng, double win_scale) {
  return {random_tensor({3 * dim, dim}, rng, 0.5), random_tensor({3 * dim}, rng, 0.1),
          random_tensor({5 * heads, dim}, rng, win_scale), random_tensor({5 * heads}, rng, win_scale),
          random_tensor({dim, dim}, rng, 0.5), random_tensor({dim}, rng, 0.1)};
}

}  // namespace

TEST(Partition, RoundTripAndSingleWindow) {
  Rng rng(1);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  auto [grid, windows] = partition_windows(x, 2);
  ASSERT_EQ(windows.size(), 4u);
  for (const auto& w : windows) EXPECT_EQ(w.shape(), (Shape{2, 2, 2}));
  EXPECT_TRUE(bit_equal(merge_windows(grid, windows), x));

  auto [g1, one] = partition_windows(x, 4);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(bit_equal(one[0], x));
}

TEST(Partition, IndexAuditEveryElementExactlyOnce) {
  Tensor x({3, 6, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
  auto [grid, windows] = partition_windows(x, 2);
  EXPECT_EQ(grid.rows, 3u);
  EXPECT_EQ(grid.cols, 2u);
  ASSERT_EQ(windows.size(), 6u);
  std::vector<int> seen(x.numel(), 0);
  for (const auto& w : windows)
    for (double v : w.vec()) ++seen[static_cast<std::size_t>(v)];
  for (int n : seen) EXPECT_EQ(n, 1);
}

TEST(Partition, RandomShapesRoundTrip) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const Tensor x = random_tensor({static_cast<std::size_t>(rng.uniform_int(1, 3)),
                                    s * static_cast<std::size_t>(rng.uniform_int(1, 4)),
                                    s * static_cast<std::size_t>(rng.uniform_int(1, 4))},
                                   rng);
    auto [grid, windows] = partition_windows(x, s);
    EXPECT_TRUE(bit_equal(merge_windows(grid, windows), x));
  }
}

TEST(Partition, RejectsNonDivisible) {
  EXPECT_THROW(partition_windows(Tensor({1, 5, 4}), 2), ShapeError);
  EXPECT_THROW(partition_windows(Tensor({1, 4, 6}), 4), ShapeError);
}

TEST(WindowParamsHead, ZeroWeightsGiveIdentity) {
  Rng rng(3);
  const WindowParams p = predict_window_params(random_tensor({4, 2, 2}, rng), Tensor({10, 4}), Tensor({10}));
  ASSERT_EQ(p.heads.size(), 2u);
  for (const auto& h : p.heads) {
    EXPECT_EQ(h.scale_x, 1.0);
    EXPECT_EQ(h.scale_y, 1.0);
    EXPECT_EQ(h.offset_x, 0.0);
    EXPECT_EQ(h.offset_y, 0.0);
    EXPECT_EQ(h.angle, 0.0);
  }
}

TEST(WindowParamsHead, BiasOnlyIgnoresContent) {
  Rng rng(4);
  const Tensor bias = random_tensor({5}, rng);
  const auto a = predict_window_params(random_tensor({3, 2, 2}, rng), Tensor({5, 3}), bias);
  const auto b = predict_window_params(random_tensor({3, 2, 2}, rng, 10.0), Tensor({5, 3}), bias);
  EXPECT_EQ(a.heads[0].raw(), b.heads[0].raw());
  EXPECT_DOUBLE_EQ(a.heads[0].scale_x, 1.0 + bias[0]);
  EXPECT_DOUBLE_EQ(a.heads[0].angle, bias[4]);
}

TEST(WindowParamsHead, MatchesHandComposedPipeline) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Tensor xw = random_tensor({3, 2, 2}, rng), w = random_tensor({10, 3}, rng), b = random_tensor({10}, rng);
    const Tensor raw = window_param_logits(xw, w, b);
    for (std::size_t o = 0; o < 10; ++o) {
      double acc = b[o];
      for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 4; ++i) mean += xw[c * 4 + i];
        mean /= 4.0;
        const double act = mean >= 0 ? mean : 0.01 * mean;
        acc += w.at(o, c) * act;
      }
      EXPECT_NEAR(raw[o], acc, 1e-12);
    }
  }
  EXPECT_THROW(predict_window_params(Tensor({3, 2, 2}), Tensor({9, 3}), Tensor({9})), ShapeError);
  EXPECT_THROW(predict_window_params(Tensor({3, 2, 2}), Tensor({5, 4}), Tensor({5})), ShapeError);
}

TEST(TransformWindow, IdentityScalingAndQuarterTurn) {
  const WindowCorners w{1.5, 1.5, 2.5, 2.5};  // half-extent 0.5 around (2, 2)
  const auto id = transform_window(w, {});
  EXPECT_DOUBLE_EQ(id.upper_left.x, 1.5);
  EXPECT_DOUBLE_EQ(id.lower_right.y, 2.5);

  const auto doubled = transform_window(w, {2.0, 2.0, 0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(doubled.lower_right.x, 3.0);
  EXPECT_DOUBLE_EQ(doubled.lower_right.y, 3.0);

  const auto turned = transform_window(w, {1.0, 1.0, 0.0, 0.0, std::numbers::pi / 2});
  EXPECT_NEAR(turned.lower_right.x, 2.5, 1e-15);
  EXPECT_NEAR(turned.lower_right.y, 1.5, 1e-15);

  const WindowTransform t{1.3, 0.7, 0.2, -0.4, 0.9};
  const auto tw = transform_window(w, t);
  const Point p = tw.map(w.x_rr(), w.y_lr());
  EXPECT_NEAR(p.x, tw.upper_right.x, 1e-15);
  EXPECT_NEAR(p.y, tw.upper_right.y, 1e-15);
  EXPECT_DOUBLE_EQ(w.x_c(), 2.0);
}

TEST(SampleWindow, IdentityReproducesLatticeBitExactly) {
  Rng rng(6);
  const Tensor f = random_tensor({2, 8, 8}, rng);
  auto [grid, windows] = partition_windows(f, 4);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_TRUE(bit_equal(sample_window(f, window_corners(r, c, 4), {}, 4), windows[r * 2 + c]));
}

TEST(SampleWindow, ConstantMapStaysConstantInBounds) {
  const Tensor f({1, 12, 12}, 2.5);
  const Tensor out = sample_window(f, window_corners(1, 1, 4), {0.8, 0.6, 0.3, -0.2, 0.7}, 4);
  for (double v : out.vec()) EXPECT_NEAR(v, 2.5, 1e-14);
}

TEST(SampleWindow, MatchesPerPointOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor f = random_tensor({2, 8, 8}, rng);
    const std::size_t r = rng.uniform_index(2), c = rng.uniform_index(2);
    const WindowTransform t{1.0 + rng.uniform(-0.5, 0.5), 1.0 + rng.uniform(-0.5, 0.5), rng.uniform(-2, 2),
                            rng.uniform(-2, 2), rng.uniform(-3.2, 3.2)};
    const Tensor out = sample_window(f, window_corners(r, c, 4), t, 4);
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          const Point p = oracle_point(r, c, 4, i, j, t);
          ASSERT_NEAR(out.at(ch, i, j), tent_oracle(f, ch, p.x, p.y), 1e-12);
        }
  }
}

TEST(SampleWindow, GradCheck) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Tensor f = random_tensor({2, 8, 8}, rng);
    Tensor raw({5});
    raw[0] = rng.uniform(-0.4, 0.4);
    raw[1] = rng.uniform(-0.4, 0.4);
    raw[2] = rng.uniform(-1.5, 1.5);
    raw[3] = rng.uniform(-1.5, 1.5);
    raw[4] = rng.uniform(-1.0, 1.0);
    EXPECT_LE(grad_check(diff::sample_window(window_corners(seed % 2, 1, 4), 4), {f, raw}), 1e-4);
  }
}

TEST(WindowAttention, SingleTokenAndUniformKeys) {
  Rng rng(8);
  const Tensor v1 = random_tensor({1, 3}, rng);
  EXPECT_TRUE(bit_equal(window_attention(random_tensor({1, 3}, rng), random_tensor({1, 3}, rng), v1), v1));

  const Tensor q = random_tensor({4, 2}, rng), v = random_tensor({4, 2}, rng);
  Tensor k({4, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    k.at(i, 0) = 0.3;
    k.at(i, 1) = -1.1;
  }
  const Tensor out = window_attention(q, k, v);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      const double mean = (v.at(0, c) + v.at(1, c) + v.at(2, c) + v.at(3, c)) / 4.0;
      EXPECT_NEAR(out.at(i, c), mean, 1e-14);
    }
}

TEST(WindowAttention, MatchesDirectFormula) {
  Rng rng(9);
  const Tensor q = random_tensor({4, 2}, rng), k = random_tensor({4, 2}, rng), v = random_tensor({4, 2}, rng);
  const Tensor out = window_attention(q, k, v);
  for (std::size_t i = 0; i < 4; ++i) {
    double w[4], z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      w[j] = std::exp((q.at(i, 0) * k.at(j, 0) + q.at(i, 1) * k.at(j, 1)) / std::sqrt(2.0));
      z += w[j];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 4; ++j) ref += w[j] / z * v.at(j, c);
      EXPECT_NEAR(out.at(i, c), ref, 1e-10);
    }
  }
  EXPECT_THROW(window_attention(Tensor({4, 2}), Tensor({4, 3}), Tensor({4, 3})), ShapeError);
}

TEST(WindowAttention, GradCheck) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    EXPECT_LE(grad_check(diff::window_attention(),
                         {random_tensor({4, 3}, rng), random_tensor({5, 3}, rng), random_tensor({5, 2}, rng)}),
              1e-4);
    EXPECT_LE(grad_check(diff::window_params(),
                         {random_tensor({4, 2, 2}, rng), random_tensor({10, 4}, rng), random_tensor({10}, rng)}),
              1e-4);
  }
}

TEST(RvsaLayer, ZeroWindowHeadReducesToPlainWindowAttention) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    AttentionWeights w = random_weights(8, 2, rng, 0.0);
    const Tensor x = random_tensor({8, 8, 8}, rng);
    EXPECT_TRUE(bit_equal(rvsa_layer(x, w, 2, 4), plain_window_layer(x, w, 2, 4)));
  }
}

TEST(RvsaLayer, NonZeroWindowHeadChangesOutput) {
  Rng rng(10);
  AttentionWeights w = random_weights(8, 2, rng, 0.5);
  const Tensor x = random_tensor({8, 8, 8}, rng);
  EXPECT_GT(max_abs_diff(rvsa_layer(x, w, 2, 4), plain_window_layer(x, w, 2, 4)), 1e-6);
}

TEST(RvsaLayer, PreservesShape) {
  Rng rng(11);
  for (auto [c, h, wd, heads, s] : std::vector<std::array<std::size_t, 5>>{
           {8, 4, 4, 2, 2}, {6, 6, 3, 3, 3}, {4, 8, 4, 1, 4}, {12, 2, 2, 4, 1}}) {
    const AttentionWeights w = random_weights(c, heads, rng, 0.3);
    const Tensor x = random_tensor({c, h, wd}, rng);
    EXPECT_EQ(rvsa_layer(x, w, heads, s).shape(), x.shape());
    EXPECT_EQ(full_attention_layer(x, w, heads).shape(), x.shape());
  }
  EXPECT_THROW(rvsa_layer(Tensor({8, 6, 6}), random_weights(8, 2, rng, 0.1), 2, 4), ShapeError);
}

TEST(RvsaLayer, GradCheckThroughFullLayer) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const AttentionWeights w = random_weights(8, 2, rng, 0.3);
    const std::vector<Tensor> in{random_tensor({8, 4, 4}, rng), w.qkv_weight, w.qkv_bias, w.winparams_weight,
                                 w.winparams_bias, w.proj_weight, w.proj_bias};
    EXPECT_LE(grad_check(diff::attention_layer(2, 2, AttentionMode::kRotatedWindow), in), 1e-4) << seed;
    EXPECT_LE(grad_check(diff::attention_layer(2, 4, AttentionMode::kFull), in), 1e-4) << seed;
  }
}

TEST(Presets, LayerKindsMatchTableConfiguration) {
  const RvsaConfig b = vitb_rvsa();
  EXPECT_EQ(b.depth, 12u);
  EXPECT_EQ(b.embed_dim, 768u);
  EXPECT_EQ(b.heads, 12u);
  EXPECT_EQ(b.full_attention_layers, (std::set<std::size_t>{3, 6, 9, 12}));
  EXPECT_EQ(b.pyramid_layers, (std::set<std::size_t>{4, 6, 8, 12}));
  EXPECT_EQ(b.rotated_window_layers(), (std::vector<std::size_t>{1, 2, 4, 5, 7, 8, 10, 11}));

  const RvsaConfig l = vitl_rvsa();
  EXPECT_EQ(l.depth, 24u);
  EXPECT_EQ(l.embed_dim, 1024u);
  EXPECT_EQ(l.heads, 16u);
  EXPECT_EQ(l.full_attention_layers, (std::set<std::size_t>{6, 12, 18, 24}));
  EXPECT_EQ(l.pyramid_layers, (std::set<std::size_t>{8, 12, 16, 24}));
  EXPECT_NO_THROW(b.validate());
  EXPECT_NO_THROW(l.validate());
  EXPECT_THROW(preset("vith-rvsa"), ConfigError);
}

TEST(Presets, ValidationRejectsBadConfigs) {
  RvsaConfig c = toy_rvsa();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_rvsa();
  c.full_attention_layers = {5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_rvsa();
  c.pyramid_layers = {0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_rvsa();
  c.window_size = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, ToyPyramidShapes) {
  const RvsaConfig cfg = toy_rvsa();
  Rng rng(12);
  const ParamMap params = init_backbone(cfg, rng);
  EXPECT_TRUE(params.count("layer01.attn.winparams.weight"));
  EXPECT_FALSE(params.count("layer04.attn.winparams.weight"));
  const auto pyramid = backbone_forward(random_tensor({32, 8, 8}, rng), cfg, params);
  ASSERT_EQ(pyramid.size(), 2u);
  EXPECT_EQ(pyramid[0].shape(), (Shape{32, 8, 8}));
  EXPECT_EQ(pyramid[1].shape(), pyramid[0].shape());
  for (const auto& p : pyramid) EXPECT_TRUE(p.all_finite());
}

TEST(Backbone, BlockGradCheck) {
  RvsaConfig cfg = toy_rvsa();
  cfg.embed_dim = 8;
  cfg.image_size = 16;
  cfg.window_size = 2;
  cfg.depth = 2;
  cfg.full_attention_layers = {2};
  cfg.pyramid_layers = {1, 2};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    ParamMap params = init_backbone(cfg, rng);
    for (auto& [k, v] : params)
      if (k.find("layer01") == 0) v = random_tensor(v.shape(), rng, 0.3);
    std::vector<std::string> keys;
    std::vector<Tensor> in{random_tensor({16, 8}, rng)};
    for (const auto& [k, v] : params)
      if (k.find("layer01") == 0) {
        keys.push_back(k);
        in.push_back(v);
      }
    const auto op = tape_op("block", [&](const std::vector<ag::Var>& vars) {
      VarMap m;
      for (std::size_t i = 0; i < keys.size(); ++i) m.emplace(keys[i], vars[i + 1]);
      return block_tokens(vars[0], cfg, 1, m);
    });
    EXPECT_LE(grad_check(op, in), 1e-4);
  }
}
