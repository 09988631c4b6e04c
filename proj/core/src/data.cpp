#include "antigan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan {

namespace fs = std::filesystem;

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kReal:
      return "real";
    case Provenance::kGenerated:
      return "generated";
    case Provenance::kMixed:
      return "mixed";
    case Provenance::kSynthetic:
      return "synthetic";
  }
  return "unknown";
}

ImageBatch::ImageBatch(torch::Tensor pixels) {
  if (pixels.dim() != 4) {
    throw ShapeMismatchError(
        fmt::format("image batch must be rank 4, got rank {}", pixels.dim()));
  }
  const int64_t c = pixels.size(1);
  if (c != 1 && c != 3) {
    throw ShapeMismatchError(
        fmt::format("image batch must have 1 or 3 channels, got {}", c));
  }
  pixels = pixels.to(torch::kFloat32).contiguous();
  if (pixels.numel() > 0) {
    const float lo = pixels.min().item<float>();
    const float hi = pixels.max().item<float>();
    if (!(lo >= -1.0F && hi <= 1.0F)) {
      throw InvalidArgumentError(fmt::format(
          "image pixels must lie in [-1, 1], got range [{}, {}]", lo, hi));
    }
  }
  pixels_ = std::move(pixels);
}

LabeledDataset::LabeledDataset(ImageBatch images, torch::Tensor labels,
                               int64_t num_classes, Provenance provenance)
    : images_(std::move(images)),
      labels_(labels.to(torch::kInt64).contiguous()),
      num_classes_(num_classes),
      provenance_(provenance) {
  if (num_classes_ <= 0) {
    throw InvalidArgumentError("num_classes must be positive");
  }
  if (labels_.dim() != 1 || labels_.size(0) != images_.count()) {
    throw ShapeMismatchError(
        fmt::format("label count {} does not match image count {}",
                    labels_.dim() == 1 ? labels_.size(0) : -1,
                    images_.count()));
  }
  if (labels_.numel() > 0) {
    const int64_t lo = labels_.min().item<int64_t>();
    const int64_t hi = labels_.max().item<int64_t>();
    if (lo < 0 || hi >= num_classes_) {
      throw InvalidArgumentError(fmt::format(
          "labels must lie in [0, {}), got [{}, {}]", num_classes_, lo, hi));
    }
  }
}

int64_t LabeledDataset::label_at(int64_t index) const {
  return labels_.data_ptr<int64_t>()[index];
}

std::vector<int64_t> LabeledDataset::indices_of_class(int64_t label) const {
  std::vector<int64_t> out;
  const int64_t* data = labels_.data_ptr<int64_t>();
  for (int64_t i = 0; i < size(); ++i) {
    if (data[i] == label) out.push_back(i);
  }
  return out;
}

std::vector<int64_t> LabeledDataset::class_counts() const {
  std::vector<int64_t> counts(static_cast<size_t>(num_classes_), 0);
  const int64_t* data = labels_.data_ptr<int64_t>();
  for (int64_t i = 0; i < size(); ++i) ++counts[static_cast<size_t>(data[i])];
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const int64_t> indices) const {
  auto index = torch::tensor(std::vector<int64_t>(indices.begin(), indices.end()),
                             torch::kInt64);
  if (indices.empty()) {
    auto shape = images_.pixels().sizes().vec();
    shape[0] = 0;
    return {ImageBatch(torch::empty(shape)), torch::empty({0}, torch::kInt64),
            num_classes_, provenance_};
  }
  return {ImageBatch(images_.pixels().index_select(0, index)),
          labels_.index_select(0, index), num_classes_, provenance_};
}

LabeledDataset LabeledDataset::only_class(int64_t label) const {
  const auto idx = indices_of_class(label);
  return subset(idx);
}

LabeledDataset LabeledDataset::with_provenance(Provenance p) const {
  LabeledDataset copy = *this;
  copy.provenance_ = p;
  return copy;
}

std::uint8_t denormalize_pixel(float value) {
  const float raw = std::round((value + 1.0F) * 127.5F);
  return static_cast<std::uint8_t>(std::clamp(raw, 0.0F, 255.0F));
}

fs::path resolve_data_root(const fs::path& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("ANTIGAN_DATA_DIR"); env && *env) {
    return fs::path(env);
  }
  return fs::path("data");
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingSourceError(
        fmt::format("dataset file not found: {}", path.string()));
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, size_t offset) {
  if (offset + 4 > bytes.size()) {
    throw Error("truncated idx header");
  }
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

constexpr int64_t kImageSize = 32;

}  // namespace

LabeledDataset read_mnist_idx(const fs::path& images_file,
                              const fs::path& labels_file,
                              std::optional<int64_t> limit) {
  const auto images = read_file(images_file);
  const auto labels = read_file(labels_file);
  if (read_be32(images, 0) != 0x00000803U) {
    throw Error(fmt::format("bad idx3 magic in {}", images_file.string()));
  }
  if (read_be32(labels, 0) != 0x00000801U) {
    throw Error(fmt::format("bad idx1 magic in {}", labels_file.string()));
  }
  int64_t count = read_be32(images, 4);
  const int64_t rows = read_be32(images, 8);
  const int64_t cols = read_be32(images, 12);
  if (read_be32(labels, 4) != count) {
    throw Error("mnist image and label counts differ");
  }
  if (rows > kImageSize || cols > kImageSize) {
    throw ShapeMismatchError("mnist images larger than 32x32");
  }
  if (limit) count = std::min(count, *limit);
  if (images.size() < 16 + static_cast<size_t>(count * rows * cols) ||
      labels.size() < 8 + static_cast<size_t>(count)) {
    throw Error("truncated mnist file");
  }

  auto pixels = torch::full({count, 1, kImageSize, kImageSize}, -1.0F);
  auto label_tensor = torch::empty({count}, torch::kInt64);
  float* out = pixels.data_ptr<float>();
  int64_t* out_labels = label_tensor.data_ptr<int64_t>();
  const int64_t top = (kImageSize - rows) / 2;
  const int64_t left = (kImageSize - cols) / 2;
  for (int64_t n = 0; n < count; ++n) {
    const std::uint8_t* src = images.data() + 16 + n * rows * cols;
    float* dst = out + n * kImageSize * kImageSize;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) {
        dst[(r + top) * kImageSize + (c + left)] = normalize_pixel(src[r * cols + c]);
      }
    }
    out_labels[n] = labels[8 + n];
  }
  return {ImageBatch(std::move(pixels)), std::move(label_tensor), 10,
          Provenance::kReal};
}

LabeledDataset read_cifar_bin(std::span<const fs::path> files, int label_bytes,
                              int label_byte, int64_t num_classes,
                              std::optional<int64_t> limit) {
  constexpr int64_t kPixels = 3 * kImageSize * kImageSize;
  const int64_t record = label_bytes + kPixels;
  std::vector<std::vector<std::uint8_t>> contents;
  int64_t total = 0;
  for (const auto& f : files) {
    contents.push_back(read_file(f));
    if (contents.back().size() % record != 0) {
      throw Error(fmt::format("{} is not a whole number of CIFAR records",
                              f.string()));
    }
    total += static_cast<int64_t>(contents.back().size()) / record;
  }
  if (limit) total = std::min(total, *limit);

  auto pixels = torch::empty({total, 3, kImageSize, kImageSize});
  auto labels = torch::empty({total}, torch::kInt64);
  float* out = pixels.data_ptr<float>();
  int64_t* out_labels = labels.data_ptr<int64_t>();
  int64_t n = 0;
  for (const auto& bytes : contents) {
    for (size_t off = 0; off < bytes.size() && n < total; off += record, ++n) {
      out_labels[n] = bytes[off + label_byte];
      if (out_labels[n] >= num_classes) {
        throw Error(fmt::format("CIFAR label {} out of range", out_labels[n]));
      }
      const std::uint8_t* src = bytes.data() + off + label_bytes;
      for (int64_t i = 0; i < kPixels; ++i) out[n * kPixels + i] = normalize_pixel(src[i]);
    }
  }
  return {ImageBatch(std::move(pixels)), std::move(labels), num_classes,
          Provenance::kReal};
}

LabeledDataset load_dataset(const std::string& name, Split split,
                            const LoadOptions& options) {
  const fs::path root = resolve_data_root(options.root);
  const bool train = split == Split::kTrain;
  if (name == "mnist") {
    const fs::path dir = root / "mnist";
    const std::string prefix = train ? "train" : "t10k";
    return read_mnist_idx(dir / (prefix + "-images-idx3-ubyte"),
                          dir / (prefix + "-labels-idx1-ubyte"), options.limit);
  }
  if (name == "cifar10") {
    const fs::path dir = root / "cifar-10-batches-bin";
    std::vector<fs::path> files;
    if (train) {
      for (int i = 1; i <= 5; ++i) {
        files.push_back(dir / fmt::format("data_batch_{}.bin", i));
      }
    } else {
      files.push_back(dir / "test_batch.bin");
    }
    return read_cifar_bin(files, 1, 0, 10, options.limit);
  }
  if (name == "cifar100") {
    const fs::path dir = root / "cifar-100-binary";
    const std::vector<fs::path> files{dir / (train ? "train.bin" : "test.bin")};
    return options.cifar100_coarse
               ? read_cifar_bin(files, 2, 0, 20, options.limit)
               : read_cifar_bin(files, 2, 1, 100, options.limit);
  }
  throw UnknownDatasetError(fmt::format("unknown dataset '{}'", name));
}

std::vector<std::vector<int64_t>> partition_indices(int64_t size,
                                                    int num_clients,
                                                    std::uint64_t seed) {
  if (num_clients < 1) {
    throw InvalidArgumentError("num_clients must be at least 1");
  }
  if (num_clients > size) {
    throw InvalidArgumentError(fmt::format(
        "cannot split {} samples across {} clients", size, num_clients));
  }
  std::vector<int64_t> order(static_cast<size_t>(size));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<int64_t>> parts(static_cast<size_t>(num_clients));
  const int64_t base = size / num_clients;
  const int64_t extra = size % num_clients;
  auto it = order.begin();
  for (int k = 0; k < num_clients; ++k) {
    const int64_t n = base + (k < extra ? 1 : 0);
    parts[k].assign(it, it + n);
    std::sort(parts[k].begin(), parts[k].end());
    it += n;
  }
  return parts;
}

std::vector<LabeledDataset> partition_clients(const LabeledDataset& ds,
                                              int num_clients,
                                              std::uint64_t seed) {
  std::vector<LabeledDataset> out;
  for (const auto& idx : partition_indices(ds.size(), num_clients, seed)) {
    out.push_back(ds.subset(idx));
  }
  return out;
}

ClassSample sample_class(const LabeledDataset& ds, int64_t label,
                         std::mt19937_64& rng) {
  const auto members = ds.indices_of_class(label);
  if (members.empty()) {
    throw EmptyClassError(fmt::format("no examples with label {}", label));
  }
  std::uniform_int_distribution<size_t> pick(0, members.size() - 1);
  const int64_t index = members[pick(rng)];
  return {index, ds.images().pixels()[index]};
}

}  // namespace antigan
