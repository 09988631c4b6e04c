#include "antigan/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"
#include "antigan/gan.hpp"
#include "antigan/networks.hpp"
#include "antigan/obfuscation_torch.hpp"

namespace antigan::attack {

namespace {

struct TrainedAttacker {
  nets::GeneratorNet generator{nullptr};
  std::vector<AttackEpochRecord> history;
};

ImageBatch sample(nets::GeneratorNet& gnet, int count, int noise_dim, std::uint64_t seed,
                  const torch::Tensor& labels) {
  auto rng = gan::make_rng(seed);
  const auto z = torch::randn({count, noise_dim}, rng);
  torch::NoGradGuard no_grad;
  gnet->eval();
  return ImageBatch(gnet->forward(z, labels).clamp(-1.0, 1.0));
}

using EpochHook = std::function<void(nets::GeneratorNet&, int epoch)>;

// Trains one GAN on `data`; labels are passed through when conditional.
TrainedAttacker train_gan(const LabeledDataset& data, const AttackConfig& config,
                          bool conditional, std::uint64_t seed, const EpochHook& hook) {
  torch::manual_seed(seed);
  const int channels = static_cast<int>(data.images().channels());
  nets::GeneratorSpec gspec;
  gspec.noise_dim = config.noise_dim;
  gspec.num_classes = conditional ? static_cast<int>(data.num_classes()) : 0;
  gspec.channels = channels;
  gspec.width = config.generator_width;
  nets::GeneratorNet gnet(gspec);
  nets::dcgan_init(*gnet);

  nets::DiscriminatorSpec dspec;
  dspec.in_channels = channels;
  dspec.in_size = static_cast<int>(data.images().height());
  dspec.num_classes = gspec.num_classes;
  dspec.width = config.discriminator_width;
  nets::DiscriminatorNet dnet(dspec);
  nets::dcgan_init(*dnet);

  const auto betas = std::make_tuple(config.beta1, config.beta2);
  torch::optim::Adam gopt(gnet->parameters(),
                          torch::optim::AdamOptions(config.learning_rate).betas(betas));
  torch::optim::Adam dopt(dnet->parameters(),
                          torch::optim::AdamOptions(config.learning_rate).betas(betas));

  std::mt19937_64 shuffle_rng(seed ^ 0xD6E8FEB86659FD93ULL);
  auto noise_rng = gan::make_rng(seed + 1);
  const int64_t n = data.size();
  const int64_t batch = config.batch_size;
  const int64_t steps = (n + batch - 1) / batch;
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& pixels = data.images().pixels();
  const auto& labels = data.labels();

  TrainedAttacker out{gnet, {}};
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double d_sum = 0.0;
    double g_sum = 0.0;
    gnet->train();
    dnet->train();
    for (int64_t s = 0; s < steps; ++s) {
      // Cycle through the shuffled order so every batch is full even when
      // the class has fewer than batch_size images.
      std::vector<int64_t> rows(static_cast<size_t>(batch));
      for (int64_t b = 0; b < batch; ++b) rows[b] = order[(s * batch + b) % n];
      const auto idx = torch::tensor(rows, torch::kInt64);
      const auto x = pixels.index_select(0, idx);
      const auto y = labels.index_select(0, idx);
      const auto z = torch::randn({batch, config.noise_dim}, noise_rng);
      const torch::Tensor cond = conditional ? y : torch::Tensor();
      const auto fake = gnet->forward(z, cond);

      dopt.zero_grad();
      const auto real_logits = dnet->forward(x, cond);
      const auto fake_logits = dnet->forward(fake.detach(), cond);
      const auto d_loss =
          torch::binary_cross_entropy_with_logits(real_logits, torch::ones_like(real_logits)) +
          torch::binary_cross_entropy_with_logits(fake_logits, torch::zeros_like(fake_logits));
      d_loss.backward();
      dopt.step();

      gopt.zero_grad();
      const auto gen_logits = dnet->forward(fake, cond);
      const auto g_loss =
          torch::binary_cross_entropy_with_logits(gen_logits, torch::ones_like(gen_logits));
      g_loss.backward();
      gopt.step();

      const double dv = d_loss.item<double>();
      const double gv = g_loss.item<double>();
      if (!std::isfinite(dv) || !std::isfinite(gv)) {
        throw DivergenceError(fmt::format("attacker GAN diverged in epoch {}", epoch));
      }
      d_sum += dv;
      g_sum += gv;
    }
    out.history.push_back({epoch, d_sum / static_cast<double>(steps),
                           g_sum / static_cast<double>(steps)});
    if (hook && config.snapshot_every > 0 && epoch % config.snapshot_every == 0) {
      hook(gnet, epoch);
    }
  }
  gnet->eval();
  return out;
}

}  // namespace

AttackResult run_blackbox_attack(const LabeledDataset& target,
                                 std::span<const int64_t> classes,
                                 const AttackConfig& config, Exposure exposure,
                                 const SnapshotCallback& on_snapshot) {
  if (exposure == Exposure::kDefended && target.provenance() == Provenance::kReal) {
    throw ProvenanceError("defended scenario exposed real private records to the attacker");
  }
  if (config.epochs < 0 || config.batch_size < 1 || config.reconstructions < 1) {
    throw InvalidArgumentError("invalid attack configuration");
  }
  for (int64_t c : classes) {
    if (c < 0 || c >= target.num_classes() || target.indices_of_class(c).empty()) {
      throw EmptyClassError(fmt::format("attack target has no images of class {}", c));
    }
  }

  AttackResult result;
  const std::uint64_t eval_seed = config.seed ^ 0xA0761D6478BD642FULL;
  if (config.conditional) {
    std::vector<int64_t> rows;
    for (int64_t c : classes) {
      const auto idx = target.indices_of_class(c);
      rows.insert(rows.end(), idx.begin(), idx.end());
    }
    std::sort(rows.begin(), rows.end());
    EpochHook hook;
    if (on_snapshot) {
      hook = [&](nets::GeneratorNet& g, int epoch) {
        for (int64_t c : classes) {
          const auto labels = torch::full({config.reconstructions}, c, torch::kInt64);
          on_snapshot(c, epoch,
                      sample(g, config.reconstructions, config.noise_dim, eval_seed + c, labels));
        }
      };
    }
    auto trained = train_gan(target.subset(rows), config, true, config.seed, hook);
    for (int64_t c : classes) {
      const auto labels = torch::full({config.reconstructions}, c, torch::kInt64);
      result.classes.push_back({c, sample(trained.generator, config.reconstructions,
                                          config.noise_dim, eval_seed + c, labels),
                                trained.history, 0.0, 0.0});
    }
    return result;
  }
  for (int64_t c : classes) {
    EpochHook hook;
    if (on_snapshot) {
      hook = [&](nets::GeneratorNet& g, int epoch) {
        on_snapshot(c, epoch, sample(g, config.reconstructions, config.noise_dim, eval_seed + c, {}));
      };
    }
    auto trained = train_gan(target.only_class(c), config, false,
                             config.seed + 1000003ULL * static_cast<std::uint64_t>(c), hook);
    result.classes.push_back({c, sample(trained.generator, config.reconstructions,
                                        config.noise_dim, eval_seed + c, {}),
                              std::move(trained.history), 0.0, 0.0});
  }
  return result;
}

void score_attack(AttackResult& result, const LabeledDataset& privates, int window_size) {
  for (auto& c : result.classes) {
    c.similarity = reconstruction_similarity(c.reconstructions, privates, c.label);
    const auto& px = c.reconstructions.pixels();
    const auto grid = obf::make_grid(static_cast<int>(px.size(2)),
                                     static_cast<int>(px.size(3)), window_size);
    c.mean_window_variance = obf::batch_mean_window_variance(px, grid);
  }
}

}  // namespace antigan::attack
