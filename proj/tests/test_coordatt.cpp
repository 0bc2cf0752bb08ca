// Copyright 2026 The Fusion4CA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "fusion4ca/autograd/gradcheck.hpp"
#include "fusion4ca/coordatt/coordatt.hpp"

namespace fusion4ca {
namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(s);
  Rng rng = make_rng(seed, "coordatt-test");
  for (auto& v : t.values()) v = normal(rng, 0.0, scale);
  return t;
}

void randomize(ParamStore<double>& store, std::uint64_t seed) {
  for (auto& p : store.all()) {
    Rng rng = make_rng(seed, p.name);
    for (auto& v : p.value.values()) v = normal(rng, 0.0, 0.5);
  }
}

Tensor<double> forward(const ParamStore<double>& store, const CoordAttParams& p, const Tensor<double>& x) {
  Tape<double> t(&store, false);
  return t.value(coord_att_forward(t, p, t.constant(x)));
}

Tensor<double> transpose(const Tensor<double>& x) {
  Tensor<double> y({x.n(), x.c(), x.w(), x.h()});
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) y(b, c, j, i) = x(b, c, i, j);
  return y;
}

TEST(CoordAtt, ZeroInputGivesZeroOutput) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 8, 4, 1);
  randomize(store, 2);
  for (double v : forward(store, p, Tensor<double>({2, 8, 5, 7})).values()) EXPECT_EQ(v, 0.0);
}

TEST(CoordAtt, ZeroWeightsGiveQuarterGain) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 8, 4, 3);
  for (auto& leaf : store.all()) leaf.value.fill(0.0);
  const Tensor<double> x = random_tensor({2, 8, 5, 7}, 4, 2.0);
  const Tensor<double> y = forward(store, p, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 0.25 * x[i], 1e-7);
}

TEST(CoordAtt, ShapeIsPreserved) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 8, 8, 5);
  EXPECT_EQ(forward(store, p, random_tensor({2, 8, 5, 7}, 6)).shape(), (Shape{2, 8, 5, 7}));
  EXPECT_THROW(forward(store, p, random_tensor({2, 4, 5, 7}, 6)), ShapeError);
  EXPECT_THROW(make_coordatt(store, 8, 3, 5, "other"), std::invalid_argument);
}

TEST(CoordAtt, GatesStayInsideUnitIntervalSoOutputShrinks) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 16, 8, 7);
  randomize(store, 8);
  const Tensor<double> x = random_tensor({2, 16, 6, 9}, 9, 3.0);
  const Tensor<double> y = forward(store, p, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(std::abs(y[i]), std::abs(x[i]));
    if (x[i] != 0.0) {
      EXPECT_GT(y[i] / x[i], 0.0);
    }
  }
}

TEST(CoordAtt, TransposeWithSwappedDirectionalConvsTransposesOutput) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 8, 4, 10);
  randomize(store, 11);
  CoordAttParams swapped = p;
  std::swap(swapped.conv_h, swapped.conv_w);
  const Tensor<double> x = random_tensor({2, 8, 5, 7}, 12);
  const Tensor<double> y = forward(store, p, x);
  const Tensor<double> yt = forward(store, swapped, transpose(x));
  EXPECT_TRUE(yt == transpose(y));
}

TEST(CoordAtt, GradientMatchesFiniteDifferences) {
  ParamStore<double> store;
  const CoordAttParams p = make_coordatt(store, 8, 4, 13);
  randomize(store, 14);
  const auto rep = check_gradients("coordatt", store, {random_tensor({2, 8, 5, 7}, 15)}, [&](Tape<double>& t, auto& v) {
    Var y = coord_att_forward(t, p, v[0]);
    return ops::dot(t, y, probe_weights(t.shape(y), 16));
  });
  EXPECT_GT(rep.checked, 0u);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(CoordAtt, LeavesCountTowardInference) {
  ParamStore<float> store;
  make_coordatt(store, 16, 8, 1);
  // shared 16->2 (+2), norm 2+2, conv_h and conv_w 2->16 (+16 each)
  std::size_t n = 0;
  for (const auto& leaf : store.all()) {
    EXPECT_TRUE(leaf.inference);
    EXPECT_EQ(leaf.group, "coordatt");
    n += leaf.value.size();
  }
  EXPECT_EQ(n, (16u * 2 + 2) + 4 + 2 * (2 * 16 + 16));
}

}  // namespace
}  // namespace fusion4ca
