#include "antigan/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <fmt/format.h>
#include <png.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan::io {

namespace fs = std::filesystem;

void write_png_grid(const fs::path& path, const ImageBatch& batch, int columns) {
  if (batch.count() == 0) throw InvalidArgumentError("cannot write an empty grid");
  columns = std::max(1, std::min<int>(columns, static_cast<int>(batch.count())));
  const int n = static_cast<int>(batch.count());
  const int c = static_cast<int>(batch.channels());
  const int h = static_cast<int>(batch.height());
  const int w = static_cast<int>(batch.width());
  const int rows = (n + columns - 1) / columns;
  const int out_w = columns * (w + 1) - 1;
  const int out_h = rows * (h + 1) - 1;
  std::vector<std::uint8_t> canvas(static_cast<size_t>(out_w) * out_h * c, 0);

  const auto px = batch.pixels().contiguous();
  const float* data = px.data_ptr<float>();
  for (int i = 0; i < n; ++i) {
    const int oy = (i / columns) * (h + 1);
    const int ox = (i % columns) * (w + 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          const float v = data[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
          canvas[((static_cast<size_t>(oy + y) * out_w) + ox + x) * c + ch] =
              denormalize_pixel(v);
        }
      }
    }
  }

  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw Error(fmt::format("cannot open {} for writing", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(fmt::format("failed writing {}", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, out_w, out_h, 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < out_h; ++y) {
    png_write_row(png, canvas.data() + static_cast<size_t>(y) * out_w * c);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

std::uint32_t get_be32(std::ifstream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("truncated idx file");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

void export_dataset(const fs::path& dir, const LabeledDataset& ds) {
  fs::create_directories(dir);
  const auto px = ds.images().pixels().contiguous();
  {
    std::ofstream out(dir / "images-idx4-ubyte", std::ios::binary);
    put_be32(out, 0x00000804U);
    for (int d = 0; d < 4; ++d) put_be32(out, static_cast<std::uint32_t>(px.size(d)));
    const float* data = px.data_ptr<float>();
    std::vector<char> bytes(static_cast<size_t>(px.numel()));
    for (size_t i = 0; i < bytes.size(); ++i) {
      bytes[i] = static_cast<char>(denormalize_pixel(data[i]));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream out(dir / "labels-idx1-ubyte", std::ios::binary);
  put_be32(out, 0x00000801U);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int64_t i = 0; i < ds.size(); ++i) {
    out.put(static_cast<char>(ds.label_at(i)));
  }
}

LabeledDataset import_dataset(const fs::path& dir, int64_t num_classes,
                              Provenance provenance) {
  std::ifstream images(dir / "images-idx4-ubyte", std::ios::binary);
  std::ifstream labels(dir / "labels-idx1-ubyte", std::ios::binary);
  if (!images || !labels) {
    throw MissingSourceError(fmt::format("no exported dataset in {}", dir.string()));
  }
  if (get_be32(images) != 0x00000804U || get_be32(labels) != 0x00000801U) {
    throw Error("bad idx magic in exported dataset");
  }
  std::vector<int64_t> dims(4);
  for (auto& d : dims) d = get_be32(images);
  const int64_t count = get_be32(labels);
  if (count != dims[0]) throw Error("exported image and label counts differ");
  auto pixels = torch::empty(dims);
  std::vector<char> raw(static_cast<size_t>(pixels.numel()));
  images.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  float* out = pixels.data_ptr<float>();
  for (size_t i = 0; i < raw.size(); ++i) {
    out[i] = normalize_pixel(static_cast<std::uint8_t>(raw[i]));
  }
  auto label_tensor = torch::empty({count}, torch::kInt64);
  int64_t* label_out = label_tensor.data_ptr<int64_t>();
  for (int64_t i = 0; i < count; ++i) {
    label_out[i] = static_cast<std::uint8_t>(labels.get());
  }
  return {ImageBatch(std::move(pixels)), std::move(label_tensor), num_classes,
          provenance};
}

}  // namespace antigan::io
