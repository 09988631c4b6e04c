#include <gtest/gtest.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"
#include "antigan/mixup.hpp"
#include "support.hpp"

namespace antigan::mixup {
namespace {

gan::Generator small_generator(int channels = 1, int classes = 10) {
  torch::manual_seed(12);
  nets::GeneratorSpec spec;
  spec.noise_dim = 16;
  spec.width = 16;
  spec.channels = channels;
  spec.num_classes = classes;
  return gan::Generator(spec);
}

TEST(VerifyMixOnce, HandPlans) {
  EXPECT_TRUE(verify_mix_once({0.5, {{0, 7, 1}, {1, 3, 1}, {2, 9, 4}}}));
  EXPECT_FALSE(verify_mix_once({0.5, {{0, 7, 1}, {0, 8, 1}}}));
  EXPECT_TRUE(verify_mix_once({0.5, {}}));
}

TEST(BuildMixed, TenThousandImagesMixOnceWithRealLabels) {
  const auto real = testing::synthetic_dataset(1000, 10, 1, 21);
  ASSERT_EQ(real.size(), 10000);
  auto g = small_generator();
  const auto before = mixup_builds();
  const auto out = build_mixed_dataset(real, g, 0.5, 4);
  EXPECT_EQ(mixup_builds(), before + 1);
  EXPECT_TRUE(verify_mix_once(out.plan));
  ASSERT_EQ(out.plan.pairs.size(), 10000U);
  EXPECT_TRUE(torch::equal(out.mixed.labels(), real.labels()));
  EXPECT_EQ(out.mixed.provenance(), Provenance::kMixed);
  EXPECT_EQ(out.generated.provenance(), Provenance::kGenerated);
  std::vector<bool> position_used(10000, false);
  for (const auto& p : out.plan.pairs) {
    ASSERT_EQ(p.label, real.label_at(p.real_index));
    ASSERT_FALSE(position_used[p.generated_index]);
    position_used[p.generated_index] = true;
  }
}

TEST(BuildMixed, FormulaMatchesElementwiseOracle) {
  const auto real = testing::synthetic_dataset(8, 10, 1, 5);
  auto g = small_generator();
  const double mu = 0.6;
  const auto out = build_mixed_dataset(real, g, mu, 9);
  const auto x = real.images().pixels().to(torch::kFloat64);
  const auto xp = out.generated.images().pixels().to(torch::kFloat64);
  const auto expect = (mu * x + (1.0 - mu) * xp).clamp(-1.0, 1.0);
  EXPECT_TRUE(torch::allclose(out.mixed.images().pixels().to(torch::kFloat64), expect, 0.0,
                              1e-6));
  // Convexity bound and range.
  const auto mixed = out.mixed.images().pixels();
  EXPECT_GE(mixed.min().item<float>(), -1.0F);
  EXPECT_LE(mixed.max().item<float>(), 1.0F);
  const auto lower = mu * x.min() + (1 - mu) * xp.min();
  EXPECT_GE(mixed.min().item<double>(), lower.item<double>() - 1e-6);
}

TEST(BuildMixed, EndpointsOfMu) {
  const auto real = testing::synthetic_dataset(20, 10, 1, 6);
  auto g = small_generator();
  const auto one = build_mixed_dataset(real, g, 1.0, 3);
  EXPECT_TRUE(torch::equal(one.mixed.images().pixels(), real.images().pixels()));
  const auto zero = build_mixed_dataset(real, g, 0.0, 3);
  EXPECT_TRUE(torch::equal(zero.mixed.images().pixels(), zero.generated.images().pixels()));
  EXPECT_TRUE(torch::equal(zero.mixed.labels(), real.labels()));
  EXPECT_THROW(build_mixed_dataset(real, g, 1.5, 3), InvalidArgumentError);
}

TEST(BuildMixed, FreshGeneratedImagePerRow) {
  const auto real = testing::synthetic_dataset(30, 10, 1, 6);
  auto g = small_generator();
  const auto out = build_mixed_dataset(real, g, 0.5, 3);
  const auto gen = out.generated.images().pixels().flatten(1);
  // No two rows share an x'.
  const auto d = torch::cdist(gen, gen);
  const auto off = d + torch::eye(gen.size(0)) * 1e9;
  EXPECT_GT(off.min().item<float>(), 0.0F);
}

TEST(BuildMixed, DeterministicForSeed) {
  const auto real = testing::synthetic_dataset(10, 10, 1, 6);
  auto g = small_generator();
  const auto a = build_mixed_dataset(real, g, 0.3, 17);
  const auto b = build_mixed_dataset(real, g, 0.3, 17);
  const auto c = build_mixed_dataset(real, g, 0.3, 18);
  EXPECT_TRUE(torch::equal(a.mixed.images().pixels(), b.mixed.images().pixels()));
  EXPECT_FALSE(torch::equal(a.mixed.images().pixels(), c.mixed.images().pixels()));
  // The chunk size only batches inference.
  const auto d = build_mixed_dataset(real, g, 0.3, 17, 7);
  EXPECT_TRUE(torch::allclose(a.mixed.images().pixels(), d.mixed.images().pixels(), 0, 1e-6));
}

TEST(BuildMixed, GeneratorMismatch) {
  const auto real = testing::synthetic_dataset(2, 10, 1, 6);
  auto rgb = small_generator(3);
  EXPECT_THROW(build_mixed_dataset(real, rgb, 0.5, 1), ShapeMismatchError);
  auto five = small_generator(1, 5);
  EXPECT_THROW(build_mixed_dataset(real, five, 0.5, 1), EmptyClassError);
}

TEST(ShadowDataset, AlignedWithRealLabels) {
  const auto real = testing::synthetic_dataset(5, 10, 1, 6);
  auto g = small_generator();
  const auto shadow = generate_shadow_dataset(real, g, 2);
  EXPECT_EQ(shadow.provenance(), Provenance::kGenerated);
  EXPECT_TRUE(torch::equal(shadow.labels(), real.labels()));
  EXPECT_EQ(shadow.size(), real.size());
}

}  // namespace
}  // namespace antigan::mixup
