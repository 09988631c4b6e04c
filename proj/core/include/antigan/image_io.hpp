#pragma once

#include <filesystem>

#include "antigan/data.hpp"

namespace antigan::io {

// Tiles the batch into a grid (row-major, `columns` wide, 1 px separators)
// and writes an 8-bit grayscale or RGB PNG.
void write_png_grid(const std::filesystem::path& path, const ImageBatch& batch,
                    int columns = 8);

// Dataset export for audits: `<dir>/images-idx4-ubyte` holds the pixels as an
// idx file with dims N, C, H, W; `<dir>/labels-idx1-ubyte` the labels.
void export_dataset(const std::filesystem::path& dir, const LabeledDataset& ds);
LabeledDataset import_dataset(const std::filesystem::path& dir,
                              int64_t num_classes, Provenance provenance);

}  // namespace antigan::io
