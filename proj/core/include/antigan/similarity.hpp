#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "antigan/data.hpp"

namespace antigan::attack {

// Structural similarity with an 11x11 Gaussian window (sigma 1.5), valid
// positions only, stabilizers C1 = (0.01 L)^2 and C2 = (0.03 L)^2 for the
// dynamic range L = 2 of [-1, 1] pixels. Multi-channel images average the
// per-channel index. Result lies in [-1, 1].
struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 2.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Precomputed local statistics of one image; comparisons against many
// candidates reuse these.
class SsimProfile {
 public:
  SsimProfile(std::span<const float> image, int channels, int height, int width,
              const SsimOptions& options = {});

  double compare(const SsimProfile& other) const;

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  std::vector<double> blur(std::span<const double> plane) const;

  SsimOptions options_;
  int channels_;
  int height_;
  int width_;
  int window_;
  std::vector<double> kernel_;
  std::vector<double> pixels_;  // channel-major copy
  std::vector<double> mean_;    // per channel, valid grid
  std::vector<double> var_;
};

double ssim(std::span<const float> a, std::span<const float> b, int channels,
            int height, int width, const SsimOptions& options = {});

// Mean over reconstructions of the best SSIM against any private image of
// `target_class`. Higher means more leakage. Throws EmptyClassError when the
// class is absent from `privates`.
double reconstruction_similarity(const ImageBatch& reconstructions,
                                 const LabeledDataset& privates,
                                 int64_t target_class,
                                 const SsimOptions& options = {});

}  // namespace antigan::attack
