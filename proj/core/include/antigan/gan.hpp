#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/types.h>

#include "antigan/data.hpp"
#include "antigan/networks.hpp"
#include "antigan/obfuscation.hpp"

namespace antigan::gan {

// Frozen first convolution of a residual network: 64 kernels of 3x7x7,
// stride 2, padding 3, no bias. 32x32 inputs map to 64x16x16.
struct FeatureExtractorSpec {
  enum class Source { kSeededRandom, kWeightFile };
  Source source = Source::kSeededRandom;
  std::uint64_t seed = 1234;
  // Raw little-endian float32 [64][3][7][7] (37632 bytes), e.g. ResNet-18
  // conv1.weight exported from torchvision.
  std::filesystem::path weight_file;
  // Optional hex SHA-256 of the weight file; checked when non-empty.
  std::string weight_sha256;
};

class FeatureExtractor {
 public:
  static constexpr int64_t kOutChannels = 64;
  static constexpr int64_t kKernel = 7;

  explicit FeatureExtractor(const FeatureExtractorSpec& spec = {});

  // Single-channel input is replicated to three channels. Throws
  // ShapeMismatchError for anything but N x {1,3} x H x W.
  torch::Tensor extract(const torch::Tensor& images) const;
  torch::Tensor extract(const ImageBatch& images) const { return extract(images.pixels()); }

  const torch::Tensor& weights() const { return weights_; }

 private:
  torch::Tensor weights_;
};

// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

// The defender's label-conditioned generator.
class Generator {
 public:
  Generator() = default;
  explicit Generator(const nets::GeneratorSpec& spec);

  const nets::GeneratorSpec& spec() const { return net_->spec(); }
  nets::GeneratorNet& net() { return net_; }

  // One image per label, noise drawn from `rng`. Runs in inference mode and
  // leaves the network's train/eval state untouched. Throws
  // InvalidArgumentError for labels outside [0, K).
  ImageBatch generate(const torch::Tensor& labels, at::Generator& rng);
  // Same, with caller-provided noise (N x noise_dim).
  ImageBatch generate_from(const torch::Tensor& z, const torch::Tensor& labels);

  void save(const std::filesystem::path& file);
  void load(const std::filesystem::path& file);

 private:
  nets::GeneratorNet net_{nullptr};
};

at::Generator make_rng(std::uint64_t seed);

struct DefenderGanConfig {
  obf::ObfuscationParams obfuscation;
  double lambda = 1000.0;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  // false: the discriminator judges raw images (plain CGAN).
  bool use_feature_extractor = true;
  FeatureExtractorSpec extractor;
  int noise_dim = 64;
  int generator_width = 64;
  int discriminator_width = 64;
  // Real images held out of training to score the discriminator each epoch.
  int holdout = 256;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  int epoch = 0;
  double discriminator_loss = 0.0;
  double generator_adversarial_loss = 0.0;
  double obfuscation_loss = 0.0;  // batch-mean L_obf, before lambda
  // Held-out real vs generated classification accuracy at threshold 0.5.
  double discriminator_accuracy = 0.0;
  double generated_window_variance = 0.0;
};

struct DefenderGan {
  Generator generator;
  std::vector<EpochRecord> history;
};

// Alternating updates: the discriminator ascends log D(C(x)|y) +
// log(1 - D(C(G(z|y))|y)); the generator descends the non-saturating
// adversarial term plus lambda * L_obf. Adam throughout. Throws
// DivergenceError if any loss turns non-finite.
DefenderGan train_defender_gan(const LabeledDataset& real, const DefenderGanConfig& config);

// Number of defender GANs constructed in this process; the harness uses it to
// prove the undefended branch never builds one.
int64_t gan_instantiations();

}  // namespace antigan::gan
