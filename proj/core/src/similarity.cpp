#include "antigan/similarity.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan::attack {

SsimProfile::SsimProfile(std::span<const float> image, int channels, int height,
                         int width, const SsimOptions& options)
    : options_(options),
      channels_(channels),
      height_(height),
      width_(width),
      window_(std::min({options.window, height, width})) {
  if (image.size() != static_cast<size_t>(channels) * height * width) {
    throw ShapeMismatchError("image size does not match its geometry");
  }
  kernel_.resize(static_cast<size_t>(window_));
  const double center = (window_ - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window_; ++i) {
    const double d = i - center;
    kernel_[i] = std::exp(-d * d / (2.0 * options_.sigma * options_.sigma));
    total += kernel_[i];
  }
  for (double& k : kernel_) k /= total;

  pixels_.assign(image.begin(), image.end());
  const size_t plane = static_cast<size_t>(height) * width;
  std::vector<double> sq(plane);
  for (int c = 0; c < channels_; ++c) {
    std::span<const double> px(pixels_.data() + c * plane, plane);
    auto mu = blur(px);
    for (size_t i = 0; i < plane; ++i) sq[i] = px[i] * px[i];
    auto ex2 = blur(sq);
    for (size_t i = 0; i < mu.size(); ++i) {
      mean_.push_back(mu[i]);
      var_.push_back(std::max(0.0, ex2[i] - mu[i] * mu[i]));
    }
  }
}

std::vector<double> SsimProfile::blur(std::span<const double> plane) const {
  const int out_w = width_ - window_ + 1;
  const int out_h = height_ - window_ + 1;
  std::vector<double> horizontal(static_cast<size_t>(height_) * out_w);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (int k = 0; k < window_; ++k) acc += kernel_[k] * plane[r * width_ + c + k];
      horizontal[r * out_w + c] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(out_h) * out_w);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (int k = 0; k < window_; ++k) acc += kernel_[k] * horizontal[(r + k) * out_w + c];
      out[r * out_w + c] = acc;
    }
  }
  return out;
}

double SsimProfile::compare(const SsimProfile& other) const {
  if (other.channels_ != channels_ || other.height_ != height_ ||
      other.width_ != width_ || other.window_ != window_) {
    throw ShapeMismatchError("SSIM operands have different geometry");
  }
  const double c1 = std::pow(options_.k1 * options_.dynamic_range, 2);
  const double c2 = std::pow(options_.k2 * options_.dynamic_range, 2);
  const size_t plane = static_cast<size_t>(height_) * width_;
  const size_t valid = mean_.size() / channels_;
  std::vector<double> prod(plane);
  double total = 0.0;
  for (int c = 0; c < channels_; ++c) {
    const double* x = pixels_.data() + c * plane;
    const double* y = other.pixels_.data() + c * plane;
    for (size_t i = 0; i < plane; ++i) prod[i] = x[i] * y[i];
    const auto exy = blur(prod);
    for (size_t i = 0; i < valid; ++i) {
      const size_t j = c * valid + i;
      const double mx = mean_[j];
      const double my = other.mean_[j];
      const double cov = exy[i] - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (var_[j] + other.var_[j] + c2));
    }
  }
  return total / static_cast<double>(valid * channels_);
}

double ssim(std::span<const float> a, std::span<const float> b, int channels,
            int height, int width, const SsimOptions& options) {
  return SsimProfile(a, channels, height, width, options)
      .compare(SsimProfile(b, channels, height, width, options));
}

namespace {

std::vector<SsimProfile> profiles_of(const torch::Tensor& batch,
                                     const SsimOptions& options) {
  const auto x = batch.to(torch::kFloat32).contiguous();
  const int c = static_cast<int>(x.size(1));
  const int h = static_cast<int>(x.size(2));
  const int w = static_cast<int>(x.size(3));
  const size_t per = static_cast<size_t>(c) * h * w;
  std::vector<SsimProfile> out;
  out.reserve(static_cast<size_t>(x.size(0)));
  const float* base = x.data_ptr<float>();
  for (int64_t n = 0; n < x.size(0); ++n) {
    out.emplace_back(std::span<const float>(base + n * per, per), c, h, w, options);
  }
  return out;
}

}  // namespace

double reconstruction_similarity(const ImageBatch& reconstructions,
                                 const LabeledDataset& privates,
                                 int64_t target_class,
                                 const SsimOptions& options) {
  const auto members = privates.indices_of_class(target_class);
  if (members.empty()) {
    throw EmptyClassError(
        fmt::format("no private images of class {}", target_class));
  }
  if (reconstructions.count() == 0) {
    throw InvalidArgumentError("no reconstructions to score");
  }
  const auto targets = profiles_of(privates.subset(members).images().pixels(), options);
  const auto recon = profiles_of(reconstructions.pixels(), options);
  double acc = 0.0;
  for (const auto& r : recon) {
    double best = -1.0;
    for (const auto& t : targets) best = std::max(best, r.compare(t));
    acc += best;
  }
  return acc / static_cast<double>(recon.size());
}

}  // namespace antigan::attack
