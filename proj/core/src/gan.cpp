#include "antigan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"
#include "antigan/obfuscation_torch.hpp"

namespace antigan::gan {

namespace {

std::atomic<int64_t> g_instantiations{0};

void require_finite(double value, const char* what, int epoch) {
  if (!std::isfinite(value)) {
    throw DivergenceError(fmt::format("{} became non-finite in epoch {}", what, epoch));
  }
}

}  // namespace

int64_t gan_instantiations() { return g_instantiations.load(); }

at::Generator make_rng(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingSourceError(fmt::format("cannot read {}", path.string()));
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorSpec& spec) {
  const std::vector<int64_t> shape{kOutChannels, 3, kKernel, kKernel};
  if (spec.source == FeatureExtractorSpec::Source::kWeightFile) {
    if (!spec.weight_sha256.empty()) {
      const auto actual = sha256_file(spec.weight_file);
      if (actual != spec.weight_sha256) {
        throw InvalidArgumentError(fmt::format(
            "extractor weight hash mismatch: expected {}, got {}", spec.weight_sha256, actual));
      }
    }
    std::ifstream in(spec.weight_file, std::ios::binary);
    if (!in) {
      throw MissingSourceError(
          fmt::format("extractor weight file not found: {}", spec.weight_file.string()));
    }
    weights_ = torch::empty(shape);
    const auto bytes = static_cast<std::streamsize>(weights_.numel() * sizeof(float));
    in.read(reinterpret_cast<char*>(weights_.data_ptr<float>()), bytes);
    if (in.gcount() != bytes || in.peek() != std::char_traits<char>::eof()) {
      throw ShapeMismatchError("extractor weight file must hold exactly 64x3x7x7 float32");
    }
  } else {
    auto rng = make_rng(spec.seed);
    const double fan_in = 3.0 * kKernel * kKernel;
    weights_ = torch::randn(shape, rng) * std::sqrt(2.0 / fan_in);
  }
  weights_.set_requires_grad(false);
}

torch::Tensor FeatureExtractor::extract(const torch::Tensor& images) const {
  if (images.dim() != 4 || (images.size(1) != 1 && images.size(1) != 3)) {
    throw ShapeMismatchError(
        fmt::format("feature extractor expects N x {{1,3}} x H x W, got {}",
                    fmt::join(images.sizes(), "x")));
  }
  const auto rgb = images.size(1) == 1 ? images.expand({-1, 3, -1, -1}) : images;
  return torch::conv2d(rgb, weights_, {}, /*stride=*/2, /*padding=*/3);
}

Generator::Generator(const nets::GeneratorSpec& spec) : net_(spec) {
  nets::dcgan_init(*net_);
  ++g_instantiations;
}

ImageBatch Generator::generate(const torch::Tensor& labels, at::Generator& rng) {
  const auto z = torch::randn({labels.size(0), spec().noise_dim}, rng);
  return generate_from(z, labels);
}

ImageBatch Generator::generate_from(const torch::Tensor& z, const torch::Tensor& labels) {
  const auto y = labels.to(torch::kInt64);
  if (y.dim() != 1 || y.size(0) != z.size(0)) {
    throw ShapeMismatchError("need exactly one label per noise vector");
  }
  if (y.numel() > 0) {
    const int64_t lo = y.min().item<int64_t>();
    const int64_t hi = y.max().item<int64_t>();
    if (lo < 0 || hi >= spec().num_classes) {
      throw InvalidArgumentError(fmt::format(
          "generator labels must lie in [0, {}), got [{}, {}]", spec().num_classes, lo, hi));
    }
  }
  const bool was_training = net_->is_training();
  net_->eval();
  torch::Tensor out;
  {
    torch::NoGradGuard no_grad;
    out = net_->forward(z, y).clamp(-1.0, 1.0);
  }
  net_->train(was_training);
  return ImageBatch(out);
}

void Generator::save(const std::filesystem::path& file) {
  if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
  torch::save(net_, file.string());
}

void Generator::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw MissingSourceError(fmt::format("checkpoint not found: {}", file.string()));
  }
  torch::load(net_, file.string());
}

DefenderGan train_defender_gan(const LabeledDataset& real, const DefenderGanConfig& config) {
  config.obfuscation.validate();
  if (!(config.lambda >= 0.0)) throw InvalidArgumentError("lambda must be >= 0");
  if (config.epochs < 0 || config.batch_size < 1) {
    throw InvalidArgumentError("epochs must be >= 0 and batch size >= 1");
  }
  if (real.empty()) throw InvalidArgumentError("defender dataset is empty");
  const auto counts = real.class_counts();
  for (size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw EmptyClassError(fmt::format("defender dataset has no class {}", k));
    }
  }

  torch::manual_seed(config.seed);
  const auto& images = real.images();
  const int channels = static_cast<int>(images.channels());
  const int size = static_cast<int>(images.height());

  nets::GeneratorSpec gspec;
  gspec.noise_dim = config.noise_dim;
  gspec.num_classes = static_cast<int>(real.num_classes());
  gspec.channels = channels;
  gspec.width = config.generator_width;
  DefenderGan result{Generator(gspec), {}};
  auto& gnet = result.generator.net();

  const FeatureExtractor extractor(config.extractor);
  nets::DiscriminatorSpec dspec;
  dspec.num_classes = gspec.num_classes;
  dspec.width = config.discriminator_width;
  if (config.use_feature_extractor) {
    dspec.in_channels = FeatureExtractor::kOutChannels;
    dspec.in_size = (size + 1) / 2;
  } else {
    dspec.in_channels = channels;
    dspec.in_size = size;
  }
  nets::DiscriminatorNet dnet(dspec);
  nets::dcgan_init(*dnet);
  auto view = [&](const torch::Tensor& x) {
    return config.use_feature_extractor ? extractor.extract(x) : x;
  };

  const auto betas = std::make_tuple(config.beta1, config.beta2);
  torch::optim::Adam gopt(gnet->parameters(),
                          torch::optim::AdamOptions(config.learning_rate).betas(betas));
  torch::optim::Adam dopt(dnet->parameters(),
                          torch::optim::AdamOptions(config.learning_rate).betas(betas));
  const auto grid = obf::make_grid(size, static_cast<int>(images.width()),
                                   config.obfuscation.window_size);

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  auto noise_rng = make_rng(config.seed + 1);
  std::vector<int64_t> order(static_cast<size_t>(real.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const int64_t holdout =
      std::min<int64_t>(config.holdout, real.size() / 10);
  std::vector<int64_t> held(order.begin(), order.begin() + holdout);
  std::vector<int64_t> train(order.begin() + holdout, order.end());
  const auto held_set = real.subset(held);
  const auto held_z = torch::randn({holdout, config.noise_dim}, noise_rng);

  const auto& all_pixels = images.pixels();
  const auto& all_labels = real.labels();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), shuffle_rng);
    double d_sum = 0.0, g_sum = 0.0, o_sum = 0.0, v_sum = 0.0;
    int batches = 0;
    gnet->train();
    dnet->train();
    for (size_t start = 0; start < train.size(); start += config.batch_size) {
      const size_t end = std::min(train.size(), start + config.batch_size);
      // BatchNorm needs two samples per batch in training mode.
      if (end - start < 2) break;
      const auto idx = torch::tensor(
          std::vector<int64_t>(train.begin() + start, train.begin() + end), torch::kInt64);
      const auto x = all_pixels.index_select(0, idx);
      const auto y = all_labels.index_select(0, idx);
      const auto z = torch::randn({x.size(0), config.noise_dim}, noise_rng);
      const auto fake = gnet->forward(z, y);

      dopt.zero_grad();
      const auto real_logits = dnet->forward(view(x), y);
      const auto fake_logits = dnet->forward(view(fake.detach()), y);
      const auto d_loss =
          torch::binary_cross_entropy_with_logits(real_logits, torch::ones_like(real_logits)) +
          torch::binary_cross_entropy_with_logits(fake_logits, torch::zeros_like(fake_logits));
      d_loss.backward();
      dopt.step();

      gopt.zero_grad();
      const auto gen_logits = dnet->forward(view(fake), y);
      const auto adv =
          torch::binary_cross_entropy_with_logits(gen_logits, torch::ones_like(gen_logits));
      const auto obf_loss = obf::batch_obfuscation_loss(fake, grid, config.obfuscation);
      auto g_loss = adv;
      if (config.lambda > 0.0) g_loss = g_loss + config.lambda * obf_loss;
      g_loss.backward();
      gopt.step();

      const double d_val = d_loss.item<double>();
      const double g_val = adv.item<double>();
      const double o_val = obf_loss.item<double>();
      require_finite(d_val, "discriminator loss", epoch);
      require_finite(g_val, "generator loss", epoch);
      require_finite(o_val, "obfuscation loss", epoch);
      d_sum += d_val;
      g_sum += g_val;
      o_sum += o_val;
      v_sum += obf::batch_mean_window_variance(fake, grid);
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double nb = std::max(1, batches);
    rec.discriminator_loss = d_sum / nb;
    rec.generator_adversarial_loss = g_sum / nb;
    rec.obfuscation_loss = o_sum / nb;
    rec.generated_window_variance = v_sum / nb;
    if (holdout > 0) {
      const auto fake = result.generator.generate_from(held_z, held_set.labels());
      torch::NoGradGuard no_grad;
      dnet->eval();
      const auto r = dnet->forward(view(held_set.images().pixels()), held_set.labels());
      const auto f = dnet->forward(view(fake.pixels()), held_set.labels());
      const double correct =
          (r > 0).sum().item<double>() + (f <= 0).sum().item<double>();
      rec.discriminator_accuracy = correct / (2.0 * static_cast<double>(holdout));
    }
    result.history.push_back(rec);
  }
  gnet->eval();
  return result;
}

}  // namespace antigan::gan
