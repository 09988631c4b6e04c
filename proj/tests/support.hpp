#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "antigan/data.hpp"

namespace antigan::testing {

// Dataset root for tests that need real MNIST; nullopt when it is absent.
std::optional<std::filesystem::path> mnist_root();

// Balanced synthetic set: `per_class` images per class, class c drawn as a
// bright square whose position depends on c, plus seeded noise.
LabeledDataset synthetic_dataset(int64_t per_class, int64_t num_classes, int channels,
                                 std::uint64_t seed,
                                 Provenance provenance = Provenance::kSynthetic);

// Writes `<root>/mnist/*-ubyte` idx files holding synthetic_dataset images
// (cropped to 28x28) so pipeline tests run without the real download.
void write_synthetic_mnist(const std::filesystem::path& root, int64_t train_per_class,
                           int64_t test_per_class, std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace antigan::testing
