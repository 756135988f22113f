/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "segpl/segcore.hpp"
#include "test_util.hpp"

namespace segpl {
namespace {

using testing::bernoulli;
using testing::uniform;

TEST(ImageBatchTest, RejectsSmallOrNonFinite) {
  EXPECT_NO_THROW(ImageBatch(Tensor<float>(Shape4{1, 1, 8, 8})));
  EXPECT_THROW(ImageBatch(Tensor<float>(Shape4{0, 1, 8, 8})), ShapeError);
  EXPECT_THROW(ImageBatch(Tensor<float>(Shape4{1, 1, 7, 8})), ShapeError);
  Tensor<float> t(Shape4{1, 1, 8, 8});
  t[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(ImageBatch{t}, DataError);
}

TEST(MaskBatchTest, EntriesMustBeBinary) {
  Tensor<float> t(Shape4{1, 1, 2, 2});
  t[0] = 1.0f;
  EXPECT_NO_THROW(MaskBatch{t});
  t[1] = 0.5f;
  EXPECT_THROW(MaskBatch{t}, DataError);
}

TEST(ProbMapTest, EntriesInUnitInterval) {
  Tensor<float> t(Shape4{1, 1, 2, 2}, 0.5f);
  EXPECT_NO_THROW(ProbMap{t});
  t[2] = 1.0001f;
  EXPECT_THROW(ProbMap{t}, DataError);
  t[2] = -0.0001f;
  EXPECT_THROW(ProbMap{t}, DataError);
}

TEST(ProbMapTest, FromLogitsIsSigmoid) {
  Tensor<float> z(Shape4{1, 1, 1, 3});
  z[0] = 0.0f;
  z[1] = 2.0f;
  z[2] = -50.0f;
  const ProbMap p = ProbMap::from_logits(z);
  EXPECT_FLOAT_EQ(p.tensor()[0], 0.5f);
  EXPECT_NEAR(p.tensor()[1], 1.0 / (1.0 + std::exp(-2.0)), 1e-7);
  EXPECT_GE(p.tensor()[2], 0.0f);
}

LabelVolume labels(int h, int w, std::initializer_list<int> values) {
  LabelVolume raw(Shape4{1, 1, h, w});
  std::copy(values.begin(), values.end(), raw.storage().begin());
  return raw;
}

TEST(DecomposeTest, NestedTumourChannels) {
  const LabelVolume raw = labels(2, 2, {0, 1, 2, 3});
  const MaskBatch m = decompose_multiclass(raw, ClassMap::brats_nested());
  ASSERT_EQ(m.shape(), (Shape4{1, 3, 2, 2}));
  const auto& t = m.tensor();
  // whole: values 1, 2, 3
  EXPECT_EQ(std::vector<float>(t.plane(0, 0).begin(), t.plane(0, 0).end()),
            (std::vector<float>{0, 1, 1, 1}));
  // core: 2, 3
  EXPECT_EQ(std::vector<float>(t.plane(0, 1).begin(), t.plane(0, 1).end()),
            (std::vector<float>{0, 0, 1, 1}));
  // enhancing: 3
  EXPECT_EQ(std::vector<float>(t.plane(0, 2).begin(), t.plane(0, 2).end()),
            (std::vector<float>{0, 0, 0, 1}));
}

TEST(DecomposeTest, AllZerosGivesEmptyMask) {
  LabelVolume raw(Shape4{2, 1, 5, 5}, 0);
  const MaskBatch m = decompose_multiclass(raw, ClassMap::brats_nested());
  EXPECT_TRUE(std::all_of(m.tensor().storage().begin(), m.tensor().storage().end(),
                          [](float v) { return v == 0.0f; }));
}

TEST(DecomposeTest, BinaryMapOnCheckerboardMatchesBruteForce) {
  LabelVolume raw(Shape4{1, 1, 9, 7});
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 7; ++x) raw(0, 0, y, x) = (x + y) % 2;
  }
  const MaskBatch m = decompose_multiclass(raw, ClassMap::binary());
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 7; ++x) {
      EXPECT_EQ(m.tensor()(0, 0, y, x), raw(0, 0, y, x) == 1 ? 1.0f : 0.0f);
    }
  }
}

TEST(DecomposeTest, UnknownValueNamedInError) {
  const LabelVolume raw = labels(1, 2, {0, 7});
  try {
    decompose_multiclass(raw, ClassMap::binary());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
}

TEST(DecomposeTest, ChannelOrRecoversForegroundSupport) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 3);
  for (const ClassMap& map : {ClassMap::brats_nested(), ClassMap::disjoint(3)}) {
    for (int trial = 0; trial < 20; ++trial) {
      LabelVolume raw(Shape4{2, 1, 6, 5});
      for (auto& x : raw.storage()) x = v(rng);
      const MaskBatch m = decompose_multiclass(raw, map);
      for (int b = 0; b < 2; ++b) {
        for (int y = 0; y < 6; ++y) {
          for (int x = 0; x < 5; ++x) {
            bool any = false;
            for (int c = 0; c < m.shape().c; ++c) any |= m.tensor()(b, c, y, x) != 0.0f;
            EXPECT_EQ(any, raw(b, 0, y, x) != 0);
          }
        }
      }
    }
  }
}

TEST(ClassMapTest, JsonRoundTrip) {
  const ClassMap m = ClassMap::brats_nested();
  const ClassMap r = ClassMap::from_json(m.to_json());
  EXPECT_EQ(r.channel_names(), m.channel_names());
  EXPECT_EQ(r.rules(), m.rules());
}

TEST(ClassMapTest, RuleOutOfRangeRejected) {
  EXPECT_THROW(ClassMap({"a"}, {{1, {1}}}), ConfigError);
}

MaskBatch mask(Shape4 s, const std::vector<float>& v) {
  Tensor<float> t(s);
  std::copy(v.begin(), v.end(), t.storage().begin());
  return MaskBatch(std::move(t));
}

TEST(IoUTest, IdentityIsOne) {
  std::mt19937_64 rng(1);
  Tensor<float> t = bernoulli({3, 2, 8, 8}, rng);
  t(0, 0, 0, 0) = 1.0f;
  EXPECT_DOUBLE_EQ(iou(MaskBatch(t), MaskBatch(t)), 1.0);
}

TEST(IoUTest, DisjointIsZero) {
  const MaskBatch a = mask({1, 1, 1, 4}, {1, 1, 0, 0});
  const MaskBatch b = mask({1, 1, 1, 4}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
}

TEST(IoUTest, UpperHalfAgainstFullImageIsHalf) {
  Tensor<float> pred(Shape4{1, 1, 6, 6});
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 6; ++x) pred(0, 0, y, x) = 1.0f;
  }
  const Tensor<float> truth(Shape4{1, 1, 6, 6}, 1.0f);
  EXPECT_DOUBLE_EQ(iou(MaskBatch(pred), MaskBatch(truth)), 0.5);
}

TEST(IoUTest, EmptyUnionChannelsAreSkipped) {
  // channel 0 perfect, channel 1 empty in both.
  const MaskBatch a = mask({1, 2, 1, 2}, {1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  const MaskBatch b = mask({1, 2, 1, 2}, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(iou(a, b), 0.5);
  EXPECT_FALSE(iou_case(mask({1, 1, 1, 2}, {0, 0}), mask({1, 1, 1, 2}, {0, 0}), 0));
}

TEST(IoUTest, ShapeMismatchThrows) {
  EXPECT_THROW(iou(MaskBatch(Tensor<float>(Shape4{1, 1, 2, 2})), MaskBatch(Tensor<float>(Shape4{1, 1, 2, 3}))),
               ShapeError);
}

TEST(IoUTest, SymmetricAndPermutationInvariant) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor<float> a = bernoulli({2, 2, 5, 6}, rng, 0.4);
    const Tensor<float> b = bernoulli({2, 2, 5, 6}, rng, 0.6);
    const double ab = iou(MaskBatch(a), MaskBatch(b));
    EXPECT_DOUBLE_EQ(ab, iou(MaskBatch(b), MaskBatch(a)));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);

    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<float> pa(a.shape()), pb(b.shape());
    for (int n = 0; n < 2; ++n) {
      for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 30; ++i) {
          pa.plane(n, c)[perm[i]] = a.plane(n, c)[i];
          pb.plane(n, c)[perm[i]] = b.plane(n, c)[i];
        }
      }
    }
    EXPECT_DOUBLE_EQ(ab, iou(MaskBatch(pa), MaskBatch(pb)));
  }
}

TEST(BrierTest, PerfectPredictorIsZero) {
  std::mt19937_64 rng(2);
  const Tensor<float> y = bernoulli({2, 1, 8, 8}, rng);
  EXPECT_DOUBLE_EQ(brier(ProbMap(y), MaskBatch(y)), 0.0);
}

TEST(BrierTest, ConstantHalfIsQuarter) {
  std::mt19937_64 rng(2);
  const Tensor<float> y = bernoulli({2, 3, 8, 8}, rng);
  EXPECT_DOUBLE_EQ(brier(ProbMap(Tensor<float>(y.shape(), 0.5f)), MaskBatch(y)), 0.25);
}

TEST(BrierTest, HandComputedTwoByTwo) {
  const MaskBatch y = mask({1, 1, 2, 2}, {1, 0, 0, 1});
  // (0.2^2 + 0.8^2 + 0.8^2 + 0.2^2) / 4 = 1.36 / 4
  EXPECT_NEAR(brier(ProbMap(Tensor<float>(Shape4{1, 1, 2, 2}, 0.8f)), y), 0.34, 1e-7);
}

TEST(BrierTest, ComplementSymmetry) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor<float> p = uniform({1, 2, 7, 7}, rng);
    const Tensor<float> y = bernoulli(p.shape(), rng);
    Tensor<float> q = p, z = y;
    for (float& v : q.storage()) v = 1.0f - v;
    for (float& v : z.storage()) v = 1.0f - v;
    EXPECT_NEAR(brier(ProbMap(p), MaskBatch(y)), brier(ProbMap(q), MaskBatch(z)), 1e-7);
  }
}

TEST(BrierTest, ShapeMismatchThrows) {
  EXPECT_THROW(brier(ProbMap(Tensor<float>(Shape4{1, 1, 2, 2})), MaskBatch(Tensor<float>(Shape4{1, 2, 2, 2}))),
               ShapeError);
}

TEST(BinarizeTest, StrictGreaterThanPerImageThreshold) {
  Tensor<float> p(Shape4{2, 1, 1, 3});
  p.storage() = {0.2f, 0.5f, 0.8f, 0.2f, 0.5f, 0.8f};
  const std::vector<float> t = {0.5f, 0.1f};
  const MaskBatch m = binarize(ProbMap(p), t);
  EXPECT_EQ(m.tensor().storage(), (AlignedVector<float>{0, 0, 1, 1, 1, 1}));
  EXPECT_THROW(binarize(ProbMap(p), std::vector<float>{0.5f}), ShapeError);
}

}  // namespace
}  // namespace segpl
