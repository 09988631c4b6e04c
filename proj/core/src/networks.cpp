#include "antigan/networks.hpp"

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan::nets {

namespace tnn = torch::nn;

GeneratorNetImpl::GeneratorNetImpl(const GeneratorSpec& spec) : spec_(spec) {
  int in = spec.noise_dim;
  if (spec.num_classes > 0) {
    embed_ = register_module("embed", tnn::Embedding(spec.num_classes, spec.label_embedding));
    in += spec.label_embedding;
  }
  const int w2 = 2 * spec.width;
  project_ = register_module("project", tnn::Linear(in, w2 * 8 * 8));
  project_bn_ = register_module("project_bn", tnn::BatchNorm1d(w2 * 8 * 8));
  up1_ = register_module("up1", tnn::ConvTranspose2d(
                                    tnn::ConvTranspose2dOptions(w2, spec.width, 4)
                                        .stride(2)
                                        .padding(1)
                                        .bias(false)));
  up1_bn_ = register_module("up1_bn", tnn::BatchNorm2d(spec.width));
  up2_ = register_module("up2", tnn::ConvTranspose2d(
                                    tnn::ConvTranspose2dOptions(spec.width, spec.channels, 4)
                                        .stride(2)
                                        .padding(1)));
}

torch::Tensor GeneratorNetImpl::forward(const torch::Tensor& z,
                                        const torch::Tensor& labels) {
  torch::Tensor h = z;
  if (spec_.num_classes > 0) {
    TORCH_CHECK(labels.defined(), "conditional generator needs labels");
    h = torch::cat({z, embed_->forward(labels)}, 1);
  }
  h = torch::relu(project_bn_->forward(project_->forward(h)));
  h = h.view({-1, 2 * spec_.width, 8, 8});
  h = torch::relu(up1_bn_->forward(up1_->forward(h)));
  return torch::tanh(up2_->forward(h));
}

DiscriminatorNetImpl::DiscriminatorNetImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  if (spec.in_size < 8 || (spec.in_size & (spec.in_size - 1)) != 0) {
    throw InvalidArgumentError(
        fmt::format("discriminator input size must be a power of two >= 8, got {}",
                    spec.in_size));
  }
  int in = spec.in_channels;
  if (spec.num_classes > 0) {
    label_plane_ = register_module(
        "label_plane", tnn::Embedding(spec.num_classes, spec.in_size * spec.in_size));
    in += 1;
  }
  body_ = tnn::Sequential();
  int size = spec.in_size;
  int channels = spec.width;
  bool first = true;
  while (size > 4) {
    body_->push_back(tnn::Conv2d(tnn::Conv2dOptions(in, channels, 4).stride(2).padding(1).bias(first)));
    if (!first) body_->push_back(tnn::BatchNorm2d(channels));
    body_->push_back(tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(0.2)));
    in = channels;
    channels *= 2;
    size /= 2;
    first = false;
  }
  register_module("body", body_);
  head_ = register_module("head", tnn::Linear(in * 4 * 4, 1));
}

torch::Tensor DiscriminatorNetImpl::forward(const torch::Tensor& x,
                                            const torch::Tensor& labels) {
  torch::Tensor h = x;
  if (spec_.num_classes > 0) {
    TORCH_CHECK(labels.defined(), "conditional discriminator needs labels");
    auto plane = label_plane_->forward(labels).view({-1, 1, spec_.in_size, spec_.in_size});
    h = torch::cat({x, plane}, 1);
  }
  h = body_->forward(h);
  return head_->forward(h.flatten(1)).view({-1});
}

ClassifierNetImpl::ClassifierNetImpl(int channels, int num_classes, int image_size) {
  conv1_ = register_module("conv1", tnn::Conv2d(tnn::Conv2dOptions(channels, 32, 3).padding(1)));
  conv2_ = register_module("conv2", tnn::Conv2d(tnn::Conv2dOptions(32, 64, 3).padding(1)));
  const int reduced = image_size / 4;
  fc1_ = register_module("fc1", tnn::Linear(64 * reduced * reduced, 128));
  fc2_ = register_module("fc2", tnn::Linear(128, num_classes));
}

torch::Tensor ClassifierNetImpl::forward(const torch::Tensor& x) {
  auto h = torch::max_pool2d(torch::relu(conv1_->forward(x)), 2);
  h = torch::max_pool2d(torch::relu(conv2_->forward(h)), 2);
  h = torch::relu(fc1_->forward(h.flatten(1)));
  return fc2_->forward(h);
}

void dcgan_init(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/true)) {
    const std::string name = m->name();
    if (name.find("Conv") != std::string::npos) {
      for (auto& p : m->named_parameters(false)) {
        if (p.key() == "weight") p.value().normal_(0.0, 0.02);
        if (p.key() == "bias") p.value().zero_();
      }
    } else if (name.find("BatchNorm") != std::string::npos) {
      for (auto& p : m->named_parameters(false)) {
        if (p.key() == "weight") p.value().normal_(1.0, 0.02);
        if (p.key() == "bias") p.value().zero_();
      }
    }
  }
}

std::vector<float> flatten_parameters(const torch::nn::Module& module) {
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(parameter_count(module)));
  for (const auto& p : module.parameters()) {
    const auto c = p.detach().to(torch::kFloat32).contiguous();
    const float* d = c.data_ptr<float>();
    flat.insert(flat.end(), d, d + c.numel());
  }
  return flat;
}

void load_flat_parameters(torch::nn::Module& module, const std::vector<float>& flat) {
  if (static_cast<int64_t>(flat.size()) != parameter_count(module)) {
    throw ShapeMismatchError(fmt::format("parameter vector has {} entries, model has {}",
                                         flat.size(), parameter_count(module)));
  }
  torch::NoGradGuard no_grad;
  size_t offset = 0;
  for (auto& p : module.parameters()) {
    const int64_t n = p.numel();
    auto src = torch::from_blob(const_cast<float*>(flat.data() + offset), p.sizes(),
                                torch::kFloat32);
    p.copy_(src);
    offset += static_cast<size_t>(n);
  }
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace antigan::nets
