#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "antigan/errors.hpp"

namespace antigan::obf {

// Half-open pixel rectangle [row_begin, row_end) x [col_begin, col_end).
struct Window {
  int row_begin = 0;
  int row_end = 0;
  int col_begin = 0;
  int col_end = 0;

  int rows() const { return row_end - row_begin; }
  int cols() const { return col_end - col_begin; }
  int area() const { return rows() * cols(); }
};

// Non-overlapping s x s tiling of an H x W image. The last row/column of
// windows is truncated when s does not divide the side.
class WindowGrid {
 public:
  WindowGrid() = default;

  int height() const { return height_; }
  int width() const { return width_; }
  int window_size() const { return window_size_; }
  int rows() const { return grid_rows_; }
  int cols() const { return grid_cols_; }
  std::span<const Window> windows() const { return windows_; }
  size_t size() const { return windows_.size(); }

  friend WindowGrid make_grid(int height, int width, int window_size);

 private:
  int height_ = 0;
  int width_ = 0;
  int window_size_ = 0;
  int grid_rows_ = 0;
  int grid_cols_ = 0;
  std::vector<Window> windows_;
};

// Throws InvalidArgumentError unless 1 <= window_size <= min(height, width).
WindowGrid make_grid(int height, int width, int window_size);

struct ObfuscationParams {
  double expected_variance = 0.4;
  int window_size = 5;

  void validate() const;
};

// Read-only view of one C x H x W image stored channel-major.
template <class T>
struct ImageView {
  std::span<const T> pixels;
  int channels = 1;
  int height = 0;
  int width = 0;

  T at(int c, int r, int col) const {
    return pixels[(static_cast<size_t>(c) * height + r) * width + col];
  }
};

// Population variance of every pixel of every channel inside `window`.
template <class T>
double window_variance(const ImageView<T>& image, const Window& window) {
  double sum = 0.0;
  for (int c = 0; c < image.channels; ++c)
    for (int r = window.row_begin; r < window.row_end; ++r)
      for (int col = window.col_begin; col < window.col_end; ++col) sum += image.at(c, r, col);
  const double m = static_cast<double>(window.area()) * image.channels;
  const double mean = sum / m;
  // Two-pass form keeps tiny variances from cancelling to negatives.
  double acc = 0.0;
  for (int c = 0; c < image.channels; ++c) {
    for (int r = window.row_begin; r < window.row_end; ++r) {
      for (int col = window.col_begin; col < window.col_end; ++col) {
        const double d = image.at(c, r, col) - mean;
        acc += d * d;
      }
    }
  }
  return acc / m;
}

template <class T>
struct ObfuscationLoss {
  double loss = 0.0;
  std::vector<T> gradient;  // same layout as the input image
};

// sum_i (Var(w_i) - v_e)^2 and its gradient with respect to every pixel.
// d Var / d p = 2 (p - mean) / m for a pixel p of an m-element window.
template <class T>
ObfuscationLoss<T> l_obf(const ImageView<T>& image, const WindowGrid& grid,
                         const ObfuscationParams& params) {
  if (image.height != grid.height() || image.width != grid.width()) {
    throw ShapeMismatchError("image geometry does not match the window grid");
  }
  ObfuscationLoss<T> out;
  out.gradient.assign(image.pixels.size(), T{0});
  for (const Window& w : grid.windows()) {
    const double m = static_cast<double>(w.area()) * image.channels;
    double sum = 0.0;
    for (int c = 0; c < image.channels; ++c)
      for (int r = w.row_begin; r < w.row_end; ++r)
        for (int col = w.col_begin; col < w.col_end; ++col) sum += image.at(c, r, col);
    const double mean = sum / m;
    const double var = window_variance(image, w);
    const double dev = var - params.expected_variance;
    out.loss += dev * dev;
    const double scale = 2.0 * dev * 2.0 / m;
    for (int c = 0; c < image.channels; ++c) {
      for (int r = w.row_begin; r < w.row_end; ++r) {
        for (int col = w.col_begin; col < w.col_end; ++col) {
          const size_t i = (static_cast<size_t>(c) * image.height + r) * image.width + col;
          out.gradient[i] = static_cast<T>(scale * (image.at(c, r, col) - mean));
        }
      }
    }
  }
  return out;
}

// Loss only; skips the gradient allocation.
template <class T>
double l_obf_value(const ImageView<T>& image, const WindowGrid& grid,
                   const ObfuscationParams& params) {
  double loss = 0.0;
  for (const Window& w : grid.windows()) {
    const double dev = window_variance(image, w) - params.expected_variance;
    loss += dev * dev;
  }
  return loss;
}

template <class T>
double mean_window_variance(const ImageView<T>& image, const WindowGrid& grid) {
  double acc = 0.0;
  for (const Window& w : grid.windows()) acc += window_variance(image, w);
  return acc / static_cast<double>(grid.size());
}

struct PixelOptimizerOptions {
  double step_size = 1.0;
  int max_steps = 5000;
  double tolerance = 1e-4;
  // Exactly constant windows have zero variance gradient, so the optimizer
  // starts from the input plus uniform noise of this amplitude.
  double initial_jitter = 1e-3;
  // A window whose pixels sit on the [-1, 1] box corners with too little
  // variance has no descent direction left. Each restart round re-draws such
  // windows (uniform noise of `restart_amplitude` around the current pixels),
  // descends on that window alone and keeps the result only if the window's
  // term dropped, so the loss stays non-increasing.
  int max_restarts = 20;
  double restart_amplitude = 1.0;
  int restart_steps = 500;
  std::uint64_t seed = 0;
};

struct PixelOptimizerResult {
  std::vector<double> image;
  int steps = 0;      // accepted steps
  int rejected = 0;   // steps undone because the loss went up
  int restarts = 0;   // window restarts that were kept
  bool converged = false;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // loss after every accepted step
};

// Projected gradient descent on L_obf with pixels clamped to [-1, 1]. A step
// that increases the loss is rejected and the step size halved, so the loss
// trace is non-increasing; accepted steps grow it again (up to 64x the
// initial step). Kept window restarts also append to the trace.
// Non-convergence is reported, not thrown.
PixelOptimizerResult obfuscate_pixels(const ImageView<double>& image,
                                      const ObfuscationParams& params,
                                      const PixelOptimizerOptions& options);

}  // namespace antigan::obf
