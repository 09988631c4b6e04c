#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

namespace antigan {

// Where a dataset's pixels came from. Components that must not see private
// records check this tag.
enum class Provenance { kReal, kGenerated, kMixed, kSynthetic };

std::string to_string(Provenance p);

// Rank-4 float32 batch (N x C x H x W) with every pixel in [-1, 1] and
// C in {1, 3}.
class ImageBatch {
 public:
  ImageBatch() = default;
  // Throws ShapeMismatchError / InvalidArgumentError when the tensor breaks
  // the batch invariants.
  explicit ImageBatch(torch::Tensor pixels);

  const torch::Tensor& pixels() const { return pixels_; }
  int64_t count() const { return pixels_.defined() ? pixels_.size(0) : 0; }
  int64_t channels() const { return pixels_.size(1); }
  int64_t height() const { return pixels_.size(2); }
  int64_t width() const { return pixels_.size(3); }

 private:
  torch::Tensor pixels_;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(ImageBatch images, torch::Tensor labels, int64_t num_classes,
                 Provenance provenance);

  const ImageBatch& images() const { return images_; }
  // int64 tensor of length size().
  const torch::Tensor& labels() const { return labels_; }
  int64_t num_classes() const { return num_classes_; }
  Provenance provenance() const { return provenance_; }
  int64_t size() const { return images_.count(); }
  bool empty() const { return size() == 0; }

  int64_t label_at(int64_t index) const;
  std::vector<int64_t> indices_of_class(int64_t label) const;
  std::vector<int64_t> class_counts() const;

  // Copies the selected rows; provenance is preserved.
  LabeledDataset subset(std::span<const int64_t> indices) const;
  LabeledDataset only_class(int64_t label) const;
  LabeledDataset with_provenance(Provenance p) const;

 private:
  ImageBatch images_;
  torch::Tensor labels_;
  int64_t num_classes_ = 0;
  Provenance provenance_ = Provenance::kReal;
};

enum class Split { kTrain, kTest };

struct LoadOptions {
  // Dataset root. Empty means $ANTIGAN_DATA_DIR, then ./data.
  std::filesystem::path root;
  std::optional<int64_t> limit;
  // CIFAR-100 only: 20 coarse labels instead of 100 fine ones.
  bool cifar100_coarse = false;
};

std::filesystem::path resolve_data_root(const std::filesystem::path& configured);

// Supported names: "mnist", "cifar10", "cifar100". MNIST is padded from
// 28x28 to 32x32 with the background value -1.
LabeledDataset load_dataset(const std::string& name, Split split,
                            const LoadOptions& options = {});

// Raw readers, exposed for tests and tools.
LabeledDataset read_mnist_idx(const std::filesystem::path& images_file,
                              const std::filesystem::path& labels_file,
                              std::optional<int64_t> limit);
// CIFAR binary records: `label_bytes` leading label bytes (1 for CIFAR-10,
// 2 for CIFAR-100) followed by 3072 pixel bytes. `label_byte` selects which
// leading byte is the label.
LabeledDataset read_cifar_bin(std::span<const std::filesystem::path> files,
                              int label_bytes, int label_byte,
                              int64_t num_classes, std::optional<int64_t> limit);

inline float normalize_pixel(std::uint8_t raw) {
  return static_cast<float>(raw) / 127.5F - 1.0F;
}
std::uint8_t denormalize_pixel(float value);

// Disjoint IID split; sizes differ by at most one.
std::vector<LabeledDataset> partition_clients(const LabeledDataset& ds,
                                              int num_clients,
                                              std::uint64_t seed);
// Index form of the same split, used by tests and provenance audits.
std::vector<std::vector<int64_t>> partition_indices(int64_t size,
                                                    int num_clients,
                                                    std::uint64_t seed);

struct ClassSample {
  int64_t index;
  torch::Tensor image;  // C x H x W
};

// Uniform over the examples carrying `label`.
ClassSample sample_class(const LabeledDataset& ds, int64_t label,
                         std::mt19937_64& rng);

}  // namespace antigan
