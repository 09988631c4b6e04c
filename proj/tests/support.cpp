#include "support.hpp"

#include <cstdlib>
#include <fstream>

#include <torch/torch.h>

namespace antigan::testing {

std::optional<std::filesystem::path> mnist_root() {
  const auto root = resolve_data_root({});
  if (std::filesystem::exists(root / "mnist" / "train-images-idx3-ubyte")) return root;
  return std::nullopt;
}

LabeledDataset synthetic_dataset(int64_t per_class, int64_t num_classes, int channels,
                                 std::uint64_t seed, Provenance provenance) {
  auto rng = at::make_generator<at::CPUGeneratorImpl>(seed);
  const int64_t n = per_class * num_classes;
  auto images = torch::full({n, channels, 32, 32}, -1.0F);
  auto labels = torch::empty({n}, torch::kInt64);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t c = i % num_classes;
    labels[i] = c;
    const int64_t r0 = 2 + (c * 7) % 20;
    const int64_t c0 = 2 + (c * 11) % 20;
    images[i].slice(1, r0, r0 + 10).slice(2, c0, c0 + 10).fill_(0.8F);
  }
  images = (images + 0.1F * torch::randn(images.sizes(), rng)).clamp(-1.0, 1.0);
  return LabeledDataset(ImageBatch(images), labels, num_classes, provenance);
}

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

void write_idx_pair(const std::filesystem::path& dir, const std::string& prefix,
                    const LabeledDataset& ds) {
  const auto n = static_cast<std::uint32_t>(ds.size());
  const auto px = ds.images().pixels().slice(2, 2, 30).slice(3, 2, 30).contiguous();
  std::ofstream img(dir / (prefix + "-images-idx3-ubyte"), std::ios::binary);
  put_be32(img, 0x803);
  put_be32(img, n);
  put_be32(img, 28);
  put_be32(img, 28);
  const float* p = px.data_ptr<float>();
  for (int64_t i = 0; i < px.numel(); ++i) img.put(static_cast<char>(denormalize_pixel(p[i])));
  std::ofstream lab(dir / (prefix + "-labels-idx1-ubyte"), std::ios::binary);
  put_be32(lab, 0x801);
  put_be32(lab, n);
  for (int64_t i = 0; i < ds.size(); ++i) lab.put(static_cast<char>(ds.label_at(i)));
}

}  // namespace

void write_synthetic_mnist(const std::filesystem::path& root, int64_t train_per_class,
                           int64_t test_per_class, std::uint64_t seed) {
  const auto dir = root / "mnist";
  std::filesystem::create_directories(dir);
  write_idx_pair(dir, "train", synthetic_dataset(train_per_class, 10, 1, seed));
  write_idx_pair(dir, "t10k", synthetic_dataset(test_per_class, 10, 1, seed + 1));
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("antigan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace antigan::testing
