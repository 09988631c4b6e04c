#pragma once

#include <cstdint>
#include <vector>

#include <torch/nn.h>

namespace antigan::nets {

// DCGAN-class generator: linear projection to (2*width) x 8 x 8, two stride-2
// transposed convolutions up to channels x 32 x 32, tanh output. With
// num_classes > 0 the label is embedded and concatenated to z.
struct GeneratorSpec {
  int noise_dim = 64;
  int num_classes = 10;  // 0 = unconditional
  int channels = 1;
  int label_embedding = 16;
  int width = 64;
};

class GeneratorNetImpl : public torch::nn::Module {
 public:
  explicit GeneratorNetImpl(const GeneratorSpec& spec);
  // labels may be undefined for an unconditional generator.
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& labels = {});
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Embedding embed_{nullptr};
  torch::nn::Linear project_{nullptr};
  torch::nn::BatchNorm1d project_bn_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr};
  torch::nn::BatchNorm2d up1_bn_{nullptr};
  torch::nn::ConvTranspose2d up2_{nullptr};
};
TORCH_MODULE(GeneratorNet);

// Strided-convolution discriminator producing one logit per input. With
// num_classes > 0 the label is embedded into an extra input plane.
struct DiscriminatorSpec {
  int in_channels = 64;
  int in_size = 16;
  int num_classes = 10;  // 0 = unconditional
  int width = 64;
};

class DiscriminatorNetImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorNetImpl(const DiscriminatorSpec& spec);
  // Raw logit; training uses the logit form of the BCE loss.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& labels = {});
  // D(x|y) in (0, 1).
  torch::Tensor probability(const torch::Tensor& x, const torch::Tensor& labels = {}) {
    return torch::sigmoid(forward(x, labels));
  }
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Embedding label_plane_{nullptr};
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(DiscriminatorNet);

// Small federated classifier: two 3x3 conv + max-pool blocks, two dense layers.
class ClassifierNetImpl : public torch::nn::Module {
 public:
  ClassifierNetImpl(int channels, int num_classes, int image_size = 32);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(ClassifierNet);

// N(0, 0.02) conv weights, N(1, 0.02) batch-norm scales.
void dcgan_init(torch::nn::Module& module);

std::vector<float> flatten_parameters(const torch::nn::Module& module);
void load_flat_parameters(torch::nn::Module& module, const std::vector<float>& flat);
int64_t parameter_count(const torch::nn::Module& module);

}  // namespace antigan::nets
