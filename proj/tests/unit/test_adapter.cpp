#include <gtest/gtest.h>

#include "lorafit/adapter.hpp"
#include "lorafit/error.hpp"
#include "lorafit/ops.hpp"
#include "lorafit/tensor_ops.hpp"
#include "test_support.hpp"

namespace lorafit {
namespace {

LoraAdapter random_adapter(Rng& rng, std::size_t d, std::size_t k, std::size_t r, double scale = 1.0) {
  auto adapter = LoraAdapter::inject(testing::uniform({d, k}, rng), r, rng, scale);
  adapter.set_factors(testing::uniform({d, r}, rng), testing::uniform({k, r}, rng));
  return adapter;
}

TEST(LoraAdapter, InjectShapesAndInit) {
  Rng rng(1);
  auto w = testing::uniform({6, 5}, rng);
  auto adapter = LoraAdapter::inject(w, 3, rng);
  EXPECT_EQ(adapter.input_dim(), 6u);
  EXPECT_EQ(adapter.output_dim(), 5u);
  EXPECT_EQ(adapter.rank(), 3u);
  EXPECT_EQ(adapter.scale(), 1.0);
  EXPECT_FALSE(adapter.merged());
  EXPECT_TRUE(bitwise_equal(adapter.base(), w));
  EXPECT_EQ(adapter.a().shape(), (Shape{6, 3}));
  EXPECT_TRUE(bitwise_equal(adapter.b(), Tensor::zeros({5, 3})));
  EXPECT_GT(frobenius_norm(adapter.a()), 0.0);
}

TEST(LoraAdapter, RankBounds) {
  Rng rng(2);
  EXPECT_THROW(LoraAdapter::inject(Tensor({4, 4}), 4, rng), RankError);
  EXPECT_THROW(LoraAdapter::inject(Tensor({4, 4}), 0, rng), RankError);
  EXPECT_THROW(LoraAdapter::inject(Tensor({8, 3}), 3, rng), RankError);
  EXPECT_NO_THROW(LoraAdapter::inject(Tensor({4, 4}), 3, rng));
}

TEST(LoraAdapter, FreshAdapterIsBitwiseIdentity) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = testing::uniform({7, 9}, rng);
    auto adapter = LoraAdapter::inject(w, 2, rng);
    auto x = testing::uniform({4, 7}, rng);
    EXPECT_TRUE(bitwise_equal(adapter.forward(x), ops::matmul(x, w)));
  }
}

TEST(LoraAdapter, ZeroInputGivesZeros) {
  Rng rng(4);
  auto adapter = random_adapter(rng, 5, 6, 2);
  EXPECT_TRUE(bitwise_equal(adapter.forward(Tensor::zeros({3, 5})), Tensor::zeros({3, 6})));
}

TEST(LoraAdapter, ForwardMatchesDensePathOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const double s = trial % 2 == 0 ? 1.0 : 0.5;
    auto adapter = random_adapter(rng, 8, 6, 3, s);
    auto x = testing::uniform({5, 8}, rng);
    Tensor dense = adapter.base();
    const Tensor ab = ops::matmul(adapter.a(), ops::transpose(adapter.b()));
    for (std::size_t i = 0; i < dense.numel(); ++i) dense[i] += s * ab[i];
    EXPECT_LT(max_abs_diff(adapter.forward(x), ops::matmul(x, dense)), 1e-10);
  }
}

TEST(LoraAdapter, TapeForwardMatchesValueForwardAndSkipsBase) {
  Rng rng(6);
  auto adapter = random_adapter(rng, 5, 4, 2, 0.75);
  auto x = testing::uniform({3, 5}, rng);
  ad::Tape tape;
  auto vars = adapter.bind(tape);
  ad::Var y = adapter.forward(tape.constant(x), vars);
  EXPECT_LT(max_abs_diff(y.value(), adapter.forward(x)), 1e-14);
  EXPECT_FALSE(vars.base.requires_grad());
  tape.backward(ad::sum(ad::tanh(y)));
  EXPECT_TRUE(bitwise_equal(vars.base.grad(), Tensor::zeros({5, 4})));
  EXPECT_GT(frobenius_norm(vars.a.grad()), 0.0);
  EXPECT_GT(frobenius_norm(vars.b.grad()), 0.0);
}

TEST(LoraAdapter, FactorGradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto adapter = random_adapter(rng, 6, 5, 2, 1.5);
  auto x = testing::uniform({4, 6}, rng);
  ad::Tape tape;
  auto vars = adapter.bind(tape);
  tape.backward(ad::sum(ad::tanh(adapter.forward(tape.constant(x), vars))));

  auto loss_a = [&](const Tensor& a) {
    auto probe = adapter;
    probe.set_factors(a, adapter.b());
    return ops::sum(ops::tanh(probe.forward(x)));
  };
  auto loss_b = [&](const Tensor& b) {
    auto probe = adapter;
    probe.set_factors(adapter.a(), b);
    return ops::sum(ops::tanh(probe.forward(x)));
  };
  EXPECT_LT(testing::relative_error(vars.a.grad(), ad::finite_diff_grad(loss_a, adapter.a())), 1e-4);
  EXPECT_LT(testing::relative_error(vars.b.grad(), ad::finite_diff_grad(loss_b, adapter.b())), 1e-4);
}

TEST(LoraAdapter, MergeWithZeroDeltaReturnsBase) {
  Rng rng(8);
  auto w = testing::uniform({5, 5}, rng);
  auto adapter = LoraAdapter::inject(w, 2, rng);
  EXPECT_TRUE(bitwise_equal(adapter.merge(), w));
}

TEST(LoraAdapter, MergedForwardMatchesAdapterForward) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto adapter = random_adapter(rng, 16, 12, 4);
    auto before = adapter;
    const Tensor merged = adapter.merge();
    for (int i = 0; i < 100; ++i) {
      auto x = testing::uniform({1, 16}, rng);
      ASSERT_LT(max_abs_diff(before.forward(x), ops::matmul(x, merged)), 1e-10);
    }
  }
}

TEST(LoraAdapter, MergeStateMachine) {
  Rng rng(10);
  auto adapter = random_adapter(rng, 6, 6, 2);
  const auto x = testing::uniform({3, 6}, rng);
  const Tensor before = adapter.forward(x);
  const Tensor a = adapter.a(), b = adapter.b();

  EXPECT_THROW(adapter.unmerge(Tensor({6, 6})), StateError);
  EXPECT_THROW(adapter.merged_weight(), StateError);
  const Tensor merged = adapter.merge();
  EXPECT_TRUE(adapter.merged());
  EXPECT_TRUE(bitwise_equal(adapter.merged_weight(), merged));
  EXPECT_THROW(adapter.merge(), StateError);
  EXPECT_THROW(adapter.forward(x), StateError);
  EXPECT_THROW(adapter.mutable_a(), StateError);
  EXPECT_THROW(adapter.mutable_b(), StateError);
  EXPECT_THROW(adapter.set_factors(a, b), StateError);
  ad::Tape tape;
  EXPECT_THROW(adapter.bind(tape), StateError);
  EXPECT_THROW(adapter.unmerge(Tensor({5, 6})), ShapeError);

  adapter.unmerge(merged);
  EXPECT_FALSE(adapter.merged());
  EXPECT_TRUE(bitwise_equal(adapter.a(), a));
  EXPECT_TRUE(bitwise_equal(adapter.b(), b));
  EXPECT_TRUE(bitwise_equal(adapter.forward(x), before));
}

TEST(LoraAdapter, TrainableParamsFormula) {
  Rng rng(11);
  EXPECT_EQ(LoraAdapter::inject(Tensor({64, 64}), 4, rng).trainable_params(), 512u);
  for (std::size_t d : {3u, 8u, 17u, 64u})
    for (std::size_t k : {5u, 9u, 64u})
      for (std::size_t r = 1; r < std::min(d, k); r += 2)
        EXPECT_EQ(LoraAdapter::inject(Tensor({d, k}), r, rng).trainable_params(), r * (d + k));
}

TEST(LoraAdapter, FromFactorsValidates) {
  EXPECT_THROW(LoraAdapter::from_factors(Tensor({4, 4}), Tensor({4, 2}), Tensor({3, 2}), 1.0),
               ShapeError);
  EXPECT_THROW(LoraAdapter::from_factors(Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4}), 1.0),
               RankError);
  auto ok = LoraAdapter::from_factors(Tensor({4, 5}), Tensor({4, 2}), Tensor({5, 2}), 2.0);
  EXPECT_EQ(ok.rank(), 2u);
  EXPECT_EQ(ok.scale(), 2.0);
}

}  // namespace
}  // namespace lorafit
