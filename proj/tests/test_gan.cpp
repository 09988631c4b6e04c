#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"
#include "antigan/gan.hpp"
#include "antigan/obfuscation_torch.hpp"
#include "support.hpp"

namespace antigan::gan {
namespace {

DefenderGanConfig tiny_config() {
  DefenderGanConfig c;
  c.epochs = 2;
  c.batch_size = 32;
  c.noise_dim = 16;
  c.generator_width = 16;
  c.discriminator_width = 16;
  c.holdout = 64;
  c.seed = 3;
  return c;
}

TEST(FeatureExtractor, ShapeLinearityAndDeterminism) {
  const FeatureExtractor fx;
  const auto x = torch::rand({5, 1, 32, 32}) * 2 - 1;
  const auto a = fx.extract(x);
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{5, 64, 16, 16}));
  EXPECT_TRUE(torch::equal(a, fx.extract(x)));
  EXPECT_EQ(fx.extract(torch::rand({2, 3, 32, 32})).sizes(),
            (std::vector<int64_t>{2, 64, 16, 16}));
  EXPECT_EQ(fx.extract(torch::zeros({2, 1, 32, 32})).abs().max().item<float>(), 0.0F);
  EXPECT_THROW(fx.extract(torch::zeros({2, 2, 32, 32})), ShapeMismatchError);

  // Same seed gives the same kernels; another seed does not.
  EXPECT_TRUE(torch::equal(FeatureExtractor().weights(), fx.weights()));
  FeatureExtractorSpec other;
  other.seed = 99;
  EXPECT_FALSE(torch::equal(FeatureExtractor(other).weights(), fx.weights()));
}

TEST(FeatureExtractor, GrayscaleIsReplicatedToRgb) {
  const FeatureExtractor fx;
  const auto g = torch::rand({2, 1, 32, 32});
  EXPECT_TRUE(torch::allclose(fx.extract(g), fx.extract(g.expand({-1, 3, -1, -1}).clone())));
}

TEST(FeatureExtractor, FrozenUnderBackward) {
  const FeatureExtractor fx;
  const auto before = fx.weights().clone();
  const auto x = torch::rand({2, 1, 32, 32}).requires_grad_(true);
  fx.extract(x).sum().backward();
  EXPECT_TRUE(x.grad().defined());
  EXPECT_FALSE(fx.weights().requires_grad());
  EXPECT_FALSE(fx.weights().grad().defined());
  EXPECT_TRUE(torch::equal(before, fx.weights()));
}

TEST(FeatureExtractor, WeightFileWithHash) {
  const auto dir = testing::scratch_dir("extractor");
  const auto file = dir / "stem.f32";
  const auto w = torch::randn({64, 3, 7, 7});
  {
    std::ofstream out(file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(w.data_ptr<float>()),
              static_cast<std::streamsize>(w.numel() * sizeof(float)));
  }
  FeatureExtractorSpec spec;
  spec.source = FeatureExtractorSpec::Source::kWeightFile;
  spec.weight_file = file;
  spec.weight_sha256 = sha256_file(file);
  EXPECT_EQ(spec.weight_sha256.size(), 64U);
  EXPECT_TRUE(torch::equal(FeatureExtractor(spec).weights(), w));

  spec.weight_sha256 = std::string(64, '0');
  EXPECT_THROW(FeatureExtractor{spec}, InvalidArgumentError);

  spec.weight_sha256.clear();
  {
    std::ofstream out(file, std::ios::binary | std::ios::app);
    out.put('x');
  }
  EXPECT_THROW(FeatureExtractor{spec}, ShapeMismatchError);
  spec.weight_file = dir / "missing.f32";
  EXPECT_THROW(FeatureExtractor{spec}, MissingSourceError);
}

TEST(Sha256, KnownDigest) {
  const auto dir = testing::scratch_dir("sha");
  {
    std::ofstream out(dir / "abc");
    out << "abc";
  }
  EXPECT_EQ(sha256_file(dir / "abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Generator, UntrainedOutputsInRange) {
  torch::manual_seed(0);
  Generator g(nets::GeneratorSpec{});
  auto rng = make_rng(1);
  const auto out = g.generate(torch::arange(10), rng);
  EXPECT_EQ(out.count(), 10);
  EXPECT_TRUE(torch::isfinite(out.pixels()).all().item<bool>());
  EXPECT_GE(out.pixels().min().item<float>(), -1.0F);
  EXPECT_LE(out.pixels().max().item<float>(), 1.0F);
}

TEST(Generator, RangeHoldsForExtremeNoise) {
  torch::manual_seed(4);
  Generator g(nets::GeneratorSpec{});
  for (int trial = 0; trial < 5; ++trial) {
    const auto z = torch::randn({16, 64}) * (1.0 + 10.0 * trial);
    const auto labels = torch::randint(0, 10, {16}, torch::kInt64);
    const auto raw = g.net()->forward(z, labels);
    EXPECT_LE(raw.abs().max().item<float>(), 1.0F);
  }
}

TEST(Generator, LabelValidationAndConditioning) {
  torch::manual_seed(2);
  Generator g(nets::GeneratorSpec{});
  auto rng = make_rng(1);
  EXPECT_THROW(g.generate(torch::tensor({10}), rng), InvalidArgumentError);
  EXPECT_THROW(g.generate(torch::tensor({-1}), rng), InvalidArgumentError);
  EXPECT_THROW(g.generate_from(torch::randn({2, 64}), torch::tensor({1})), ShapeMismatchError);

  const auto z = torch::randn({1, 64});
  const auto a = g.generate_from(z, torch::tensor({3}));
  const auto b = g.generate_from(z, torch::tensor({7}));
  EXPECT_GT((a.pixels() - b.pixels()).norm().item<double>(), 0.0);
}

TEST(Generator, SeededGenerationAndCheckpointRoundTrip) {
  torch::manual_seed(5);
  Generator g(nets::GeneratorSpec{});
  auto r1 = make_rng(9);
  auto r2 = make_rng(9);
  const auto labels = torch::arange(10);
  const auto a = g.generate(labels, r1);
  EXPECT_TRUE(torch::equal(a.pixels(), g.generate(labels, r2).pixels()));

  const auto dir = testing::scratch_dir("checkpoint");
  g.save(dir / "g.pt");
  torch::manual_seed(6);
  Generator h(nets::GeneratorSpec{});
  h.load(dir / "g.pt");
  auto r3 = make_rng(9);
  EXPECT_TRUE(torch::equal(a.pixels(), h.generate(labels, r3).pixels()));
  EXPECT_THROW(h.load(dir / "none.pt"), MissingSourceError);
}

TEST(Discriminator, ProbabilityInOpenUnitInterval) {
  torch::manual_seed(1);
  nets::DiscriminatorNet d(nets::DiscriminatorSpec{});
  const auto p = d->probability(torch::randn({8, 64, 16, 16}) * 5, torch::arange(8));
  EXPECT_GT(p.min().item<float>(), 0.0F);
  EXPECT_LT(p.max().item<float>(), 1.0F);
}

TEST(Objective, ObfuscationTermMovesGeneratorWithFrozenDiscriminator) {
  torch::manual_seed(8);
  nets::GeneratorSpec spec;
  spec.width = 16;
  nets::GeneratorNet g(spec);
  nets::dcgan_init(*g);
  nets::DiscriminatorNet d(nets::DiscriminatorSpec{64, 16, 10, 16});
  for (auto& p : d->parameters()) p.set_requires_grad(false);
  const FeatureExtractor fx;
  const auto grid = obf::make_grid(32, 32, 5);
  const obf::ObfuscationParams params{0.4, 5};
  const auto z = torch::randn({16, 64});
  const auto y = torch::arange(16) % 10;

  auto lobf = [&] {
    torch::NoGradGuard ng;
    return obf::batch_obfuscation_loss(g->forward(z, y), grid, params).item<double>();
  };
  const double before = lobf();
  torch::optim::SGD opt(g->parameters(), 1e-3);
  const auto fake = g->forward(z, y);
  const auto logits = d->forward(fx.extract(fake), y);
  const auto adv = torch::binary_cross_entropy_with_logits(logits, torch::ones_like(logits));
  const auto loss = adv + 1000.0 * obf::batch_obfuscation_loss(fake, grid, params);
  loss.backward();
  double grad_norm = 0.0;
  for (const auto& p : g->parameters()) {
    if (p.grad().defined()) grad_norm += p.grad().norm().item<double>();
  }
  EXPECT_GT(grad_norm, 0.0);
  opt.step();
  EXPECT_NE(lobf(), before);
}

TEST(TrainDefenderGan, HistoryIsFiniteAndDeterministic) {
  const auto ds = testing::synthetic_dataset(40, 10, 1, 7);
  const auto cfg = tiny_config();
  const auto a = train_defender_gan(ds, cfg);
  const auto b = train_defender_gan(ds, cfg);
  ASSERT_EQ(a.history.size(), 2U);
  for (size_t i = 0; i < a.history.size(); ++i) {
    const auto& r = a.history[i];
    EXPECT_EQ(r.epoch, static_cast<int>(i) + 1);
    EXPECT_TRUE(std::isfinite(r.discriminator_loss));
    EXPECT_TRUE(std::isfinite(r.generator_adversarial_loss));
    EXPECT_TRUE(std::isfinite(r.obfuscation_loss));
    EXPECT_EQ(r.discriminator_loss, b.history[i].discriminator_loss);
    EXPECT_EQ(r.generator_adversarial_loss, b.history[i].generator_adversarial_loss);
    EXPECT_EQ(r.obfuscation_loss, b.history[i].obfuscation_loss);
    EXPECT_EQ(r.discriminator_accuracy, b.history[i].discriminator_accuracy);
  }
  EXPECT_GT(a.history.front().discriminator_accuracy, 0.5);
}

TEST(TrainDefenderGan, LambdaPullsWindowVarianceTowardTarget) {
  const auto ds = testing::synthetic_dataset(40, 10, 1, 7);
  auto cfg = tiny_config();
  cfg.epochs = 3;
  cfg.obfuscation = {0.4, 5};
  cfg.lambda = 0.0;
  const auto plain = train_defender_gan(ds, cfg);
  cfg.lambda = 1000.0;
  const auto obf = train_defender_gan(ds, cfg);
  const double dev_plain = std::abs(plain.history.back().generated_window_variance - 0.4);
  const double dev_obf = std::abs(obf.history.back().generated_window_variance - 0.4);
  EXPECT_LT(dev_obf, dev_plain);
}

TEST(TrainDefenderGan, PixelSpaceDiscriminatorBranch) {
  const auto ds = testing::synthetic_dataset(20, 10, 1, 9);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.use_feature_extractor = false;
  const auto out = train_defender_gan(ds, cfg);
  ASSERT_EQ(out.history.size(), 1U);
  EXPECT_TRUE(std::isfinite(out.history[0].discriminator_loss));
}

TEST(TrainDefenderGan, Preconditions) {
  const auto ds = testing::synthetic_dataset(4, 10, 1, 1);
  auto cfg = tiny_config();
  cfg.lambda = -1.0;
  EXPECT_THROW(train_defender_gan(ds, cfg), InvalidArgumentError);
  cfg.lambda = 1.0;
  const auto partial = ds.subset(ds.indices_of_class(0));
  EXPECT_THROW(train_defender_gan(partial, cfg), EmptyClassError);
  cfg.epochs = 0;
  EXPECT_TRUE(train_defender_gan(ds, cfg).history.empty());
}

TEST(TrainDefenderGan, CountsInstantiations) {
  const auto before = gan_instantiations();
  auto cfg = tiny_config();
  cfg.epochs = 0;
  train_defender_gan(testing::synthetic_dataset(2, 10, 1, 1), cfg);
  EXPECT_EQ(gan_instantiations(), before + 1);
}

}  // namespace
}  // namespace antigan::gan
