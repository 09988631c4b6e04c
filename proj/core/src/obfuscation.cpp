#include "antigan/obfuscation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace antigan::obf {

WindowGrid make_grid(int height, int width, int window_size) {
  if (height < 1 || width < 1) {
    throw InvalidArgumentError("image dimensions must be positive");
  }
  if (window_size < 1 || window_size > std::min(height, width)) {
    throw InvalidArgumentError(fmt::format(
        "window size {} outside [1, {}]", window_size, std::min(height, width)));
  }
  WindowGrid grid;
  grid.height_ = height;
  grid.width_ = width;
  grid.window_size_ = window_size;
  grid.grid_rows_ = (height + window_size - 1) / window_size;
  grid.grid_cols_ = (width + window_size - 1) / window_size;
  grid.windows_.reserve(static_cast<size_t>(grid.grid_rows_) * grid.grid_cols_);
  for (int r = 0; r < height; r += window_size) {
    for (int c = 0; c < width; c += window_size) {
      grid.windows_.push_back(Window{r, std::min(r + window_size, height), c,
                                     std::min(c + window_size, width)});
    }
  }
  return grid;
}

void ObfuscationParams::validate() const {
  if (!(expected_variance >= 0.0) || !std::isfinite(expected_variance)) {
    throw InvalidArgumentError(
        fmt::format("expected variance must be >= 0, got {}", expected_variance));
  }
  if (window_size < 1) {
    throw InvalidArgumentError("window size must be positive");
  }
}

namespace {

double flat_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

double term(const std::vector<double>& v, double expected) {
  const double dev = flat_variance(v) - expected;
  return dev * dev;
}

// Backtracking descent on a single window's term (v - v_e)^2.
void descend_window(std::vector<double>& v, double expected, double step, int max_steps) {
  const double m = static_cast<double>(v.size());
  double loss = term(v, expected);
  std::vector<double> cand(v.size());
  for (int it = 0; it < max_steps && step >= 1e-12; ++it) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= m;
    const double scale = 4.0 * (flat_variance(v) - expected) / m;
    for (size_t i = 0; i < v.size(); ++i) {
      cand[i] = std::clamp(v[i] - step * scale * (v[i] - mean), -1.0, 1.0);
    }
    const double next = term(cand, expected);
    if (next <= loss) {
      v.swap(cand);
      loss = next;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
}

}  // namespace

PixelOptimizerResult obfuscate_pixels(const ImageView<double>& image,
                                      const ObfuscationParams& params,
                                      const PixelOptimizerOptions& options) {
  params.validate();
  if (!(options.step_size > 0.0)) {
    throw InvalidArgumentError("step size must be positive");
  }
  const WindowGrid grid = make_grid(image.height, image.width, params.window_size);

  PixelOptimizerResult result;
  result.image.assign(image.pixels.begin(), image.pixels.end());
  auto view = [&](const std::vector<double>& px) {
    return ImageView<double>{px, image.channels, image.height, image.width};
  };

  double loss = l_obf_value(view(result.image), grid, params);
  if (loss < options.tolerance) {
    result.converged = true;
    result.final_loss = loss;
    return result;
  }

  if (options.initial_jitter > 0.0) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> noise(-options.initial_jitter,
                                                 options.initial_jitter);
    for (double& p : result.image) p = std::clamp(p + noise(rng), -1.0, 1.0);
    loss = l_obf_value(view(result.image), grid, params);
  }

  double step = options.step_size;
  std::vector<double> candidate(result.image.size());
  while (result.steps < options.max_steps && loss >= options.tolerance) {
    const auto eval = l_obf(view(result.image), grid, params);
    for (size_t i = 0; i < candidate.size(); ++i) {
      candidate[i] = std::clamp(result.image[i] - step * eval.gradient[i], -1.0, 1.0);
    }
    const double next = l_obf_value(view(candidate), grid, params);
    if (next <= loss) {
      result.image.swap(candidate);
      loss = next;
      ++result.steps;
      result.loss_trace.push_back(loss);
      step = std::min(step * 1.5, options.step_size * 64.0);
    } else {
      ++result.rejected;
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }

  std::mt19937_64 restart_rng(options.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> restart_noise(-options.restart_amplitude,
                                                       options.restart_amplitude);
  const double per_window = options.tolerance / static_cast<double>(grid.size());
  for (int round = 0; round < options.max_restarts && loss >= options.tolerance; ++round) {
    bool improved = false;
    for (const Window& w : grid.windows()) {
      std::vector<size_t> idx;
      for (int c = 0; c < image.channels; ++c)
        for (int r = w.row_begin; r < w.row_end; ++r)
          for (int col = w.col_begin; col < w.col_end; ++col)
            idx.push_back((static_cast<size_t>(c) * image.height + r) * image.width + col);
      std::vector<double> current(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) current[i] = result.image[idx[i]];
      const double before = term(current, params.expected_variance);
      if (before < per_window) continue;
      std::vector<double> trial(current);
      for (double& p : trial) p = std::clamp(p + restart_noise(restart_rng), -1.0, 1.0);
      descend_window(trial, params.expected_variance, options.step_size, options.restart_steps);
      if (term(trial, params.expected_variance) < before) {
        for (size_t i = 0; i < idx.size(); ++i) result.image[idx[i]] = trial[i];
        improved = true;
        ++result.restarts;
      }
    }
    if (improved) {
      loss = l_obf_value(view(result.image), grid, params);
      result.loss_trace.push_back(loss);
    }
  }
  result.final_loss = loss;
  result.converged = loss < options.tolerance;
  return result;
}

}  // namespace antigan::obf
