#include "antigan/obfuscation_torch.hpp"

#include <torch/torch.h>

namespace antigan::obf {

namespace {

ImageView<float> view_of(const torch::Tensor& images, int64_t n) {
  const int64_t c = images.size(1);
  const int64_t h = images.size(2);
  const int64_t w = images.size(3);
  const float* base = images.data_ptr<float>() + n * c * h * w;
  return {std::span<const float>(base, static_cast<size_t>(c * h * w)),
          static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
}

class ObfuscationLossFn : public torch::autograd::Function<ObfuscationLossFn> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx,
                               const torch::Tensor& images, const WindowGrid* grid,
                               const ObfuscationParams* params) {
    const auto x = images.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    const int64_t n = x.size(0);
    auto grad = torch::empty_like(x);
    float* g = grad.data_ptr<float>();
    double total = 0.0;
    const int64_t per_image = x[0].numel();
    for (int64_t i = 0; i < n; ++i) {
      auto res = l_obf(view_of(x, i), *grid, *params);
      total += res.loss;
      const float inv_n = 1.0F / static_cast<float>(n);
      for (int64_t k = 0; k < per_image; ++k) g[i * per_image + k] = res.gradient[k] * inv_n;
    }
    ctx->save_for_backward({grad});
    return torch::tensor(static_cast<float>(total / static_cast<double>(n)),
                         images.options());
  }

  static torch::autograd::variable_list backward(
      torch::autograd::AutogradContext* ctx,
      torch::autograd::variable_list grad_output) {
    const auto saved = ctx->get_saved_variables();
    return {saved[0] * grad_output[0], torch::Tensor(), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor batch_obfuscation_loss(const torch::Tensor& images,
                                     const WindowGrid& grid,
                                     const ObfuscationParams& params) {
  TORCH_CHECK(images.dim() == 4 && images.size(0) > 0, "expected a non-empty NCHW batch");
  return ObfuscationLossFn::apply(images, &grid, &params);
}

double batch_mean_window_variance(const torch::Tensor& images,
                                  const WindowGrid& grid) {
  const auto x = images.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(0); ++i) acc += mean_window_variance(view_of(x, i), grid);
  return x.size(0) > 0 ? acc / static_cast<double>(x.size(0)) : 0.0;
}

}  // namespace antigan::obf
