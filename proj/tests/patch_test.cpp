#include <gtest/gtest.h>

#include <random>

#include "dagl/patch.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

using namespace dagl;
using dagl::testing::random_tensor;

namespace {

PatchGeometry geom(std::size_t c, std::size_t h, std::size_t w, std::size_t patch, std::size_t stride) {
  PatchGeometry g;
  g.patch_w = g.patch_h = patch;
  g.stride = stride;
  g.channels = c;
  g.map_h = h;
  g.map_w = w;
  return g;
}

Tensor iota(Shape s) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(i);
  return t;
}

}  // namespace

TEST(Geometry, OriginsClampToBorder) {
  auto g = geom(1, 10, 10, 7, 3);
  EXPECT_EQ(g.origins_x(), (std::vector<std::size_t>{0, 3}));
  g.map_w = 11;
  EXPECT_EQ(g.origins_x(), (std::vector<std::size_t>{0, 3, 4}));
  EXPECT_EQ(geom(1, 64, 64, 7, 3).count(), 400u);
  EXPECT_EQ(geom(2, 8, 8, 2, 2).patch_length(), 8u);
}

TEST(Geometry, Validation) {
  EXPECT_THROW(geom(1, 4, 4, 5, 1).validate(), DimensionError);
  EXPECT_THROW(geom(1, 4, 4, 2, 0).validate(), DimensionError);
  EXPECT_THROW(geom(0, 4, 4, 2, 1).validate(), DimensionError);
  EXPECT_NO_THROW(geom(1, 4, 4, 4, 9).validate());  // one patch covers the map
  EXPECT_NO_THROW(geom(1, 6, 6, 3, 3).validate());
  EXPECT_NO_THROW(geom(1, 6, 6, 3, 5).validate());  // origins 0 and 3, the clamp closes the gap
  EXPECT_THROW(geom(1, 9, 9, 2, 3).validate(), DimensionError);
  EXPECT_THROW(geom(1, 8, 8, 3, 5).validate(), DimensionError);  // origins 0 and 5 skip column 3
  EXPECT_THROW(unfold(constant(Tensor({1, 4, 4})), geom(1, 5, 4, 2, 2)), DimensionError);
}

TEST(Unfold, WholeMapPatch) {
  auto f = iota({1, 4, 4});
  auto ps = unfold(constant(f), geom(1, 4, 4, 4, 4));
  ASSERT_EQ(ps.count(), 1u);
  EXPECT_EQ(ps.patches.value(), f.reshaped({1, 16}));
}

TEST(Unfold, DisjointBlocks) {
  auto f = iota({1, 4, 4});
  auto ps = unfold(constant(f), geom(1, 4, 4, 2, 2));
  ASSERT_EQ(ps.count(), 4u);
  EXPECT_EQ(ps.patches.value(), Tensor::matrix({{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}}));
}

TEST(Unfold, IndexArithmeticOracle) {
  std::mt19937_64 rng(2);
  for (auto [c, h, w, p, s] : std::vector<std::array<std::size_t, 5>>{{1, 4, 4, 3, 1}, {3, 9, 7, 3, 2}, {2, 13, 10, 7, 3}}) {
    auto g = geom(c, h, w, p, s);
    auto f = random_tensor({c, h, w}, rng);
    auto ps = unfold(constant(f), g);
    const auto ys = g.origins_y(), xs = g.origins_x();
    ASSERT_EQ(ps.count(), ys.size() * xs.size());
    for (std::size_t i = 0; i < ps.count(); ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            ASSERT_EQ(ps.patches.value().at(i, (ch * p + dy) * p + dx),
                      f.at(ch, ys[i / xs.size()] + dy, xs[i % xs.size()] + dx));
  }
}

TEST(Fold, InvertsUnfold) {
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1, 2, 3, 5, 7}) {
    auto g = geom(2, 15, 12, 7, stride);
    auto f = random_tensor({2, 15, 12}, rng);
    EXPECT_LT(max_abs_diff(fold(unfold(constant(f), g)).value(), f), 1e-12) << "stride " << stride;
  }
}

TEST(Fold, DisjointIsRearrangement) {
  auto g = geom(1, 4, 4, 2, 2);
  auto rows = Tensor::matrix({{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}});
  EXPECT_EQ(fold(PatchSet{g, constant(rows)}).value(), iota({1, 4, 4}));
}

TEST(Fold, AveragesOverlaps) {
  auto g = geom(1, 4, 4, 3, 1);
  Tensor rows({4, 9});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 9; ++j) rows.at(i, j) = static_cast<Real>(i);
  auto out = fold(PatchSet{g, constant(rows)}).value();
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 1.5);
  EXPECT_DOUBLE_EQ(out.at(0, 3, 3), 3);
}

TEST(Coverage, CountingOracle) {
  auto g = geom(1, 4, 4, 3, 1);
  auto counts = coverage_counts(g);
  // Brute force: test every origin for containment.
  Tensor oracle({4, 4});
  for (std::size_t oy : g.origins_y())
    for (std::size_t ox : g.origins_x())
      for (std::size_t y = oy; y < oy + 3; ++y)
        for (std::size_t x = ox; x < ox + 3; ++x) oracle.at(y, x) += 1;
  EXPECT_EQ(counts, oracle);
  EXPECT_EQ(counts.at(0, 0), 1);
  EXPECT_EQ(counts.at(0, 1), 2);
  EXPECT_EQ(counts.at(1, 1), 4);

  EXPECT_EQ(coverage_counts(geom(1, 6, 8, 2, 2)), Tensor::full({6, 8}, 1));
  auto big = coverage_counts(geom(1, 20, 17, 7, 3));
  for (Real v : big.data()) EXPECT_GE(v, 1);
}

TEST(Coverage, SumFoldIsCountTimesMeanFold) {
  std::mt19937_64 rng(4);
  auto g = geom(2, 11, 9, 4, 3);
  auto rows = random_tensor({g.count(), g.patch_length()}, rng);
  auto summed = kernels::fold_sum(rows, g);
  auto mean = fold(PatchSet{g, constant(rows)}).value();
  auto counts = coverage_counts(g);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 11; ++y)
      for (std::size_t x = 0; x < 9; ++x)
        EXPECT_NEAR(summed.at(c, y, x), counts.at(y, x) * mean.at(c, y, x), 1e-12);
}

TEST(Unfold, IsLinear) {
  std::mt19937_64 rng(5);
  auto g = geom(2, 10, 10, 7, 3);
  auto f = random_tensor({2, 10, 10}, rng), h = random_tensor({2, 10, 10}, rng);
  const Real a = 1.7;
  Tensor combo({2, 10, 10});
  for (std::size_t i = 0; i < combo.numel(); ++i) combo[i] = a * f[i] + h[i];
  auto lhs = kernels::unfold(combo, g);
  auto uf = kernels::unfold(f, g), uh = kernels::unfold(h, g);
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], a * uf[i] + uh[i], 1e-12);
}

TEST(Gradient, FoldUnfoldIsIdentity) {
  std::mt19937_64 rng(6);
  auto g = geom(1, 9, 8, 3, 2);
  auto f = random_tensor({1, 9, 8}, rng), probe = random_tensor({1, 9, 8}, rng);
  Tape tape;
  Var x = tape.leaf(f);
  tape.backward(sum(mul(fold(unfold(x, g)), constant(probe))));
  EXPECT_LT(max_abs_diff(tape.grad(x), probe), 1e-12);

  auto check = dagl::testing::check_input_gradient(
      f, [&](const Var& v) { return squared_norm(fold(unfold(v, g))); });
  EXPECT_LT(check.max_rel_error, 1e-4);
  auto check_rows = dagl::testing::check_input_gradient(random_tensor({g.count(), 9}, rng), [&](const Var& v) {
    return sum(mul(fold(PatchSet{g, v}), constant(probe)));
  });
  EXPECT_LT(check_rows.max_rel_error, 1e-4);
}
