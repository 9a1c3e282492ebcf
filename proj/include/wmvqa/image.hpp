#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wmvqa {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB raster, row-major, three bytes per pixel.
class DocumentImage {
 public:
  DocumentImage() = default;
  DocumentImage(int width, int height, Rgb fill = {255, 255, 255});
  DocumentImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  Rgb at(int x, int y) const {
    const auto* p = &pixels_[idx(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &pixels_[idx(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  // Mean ITU-R BT.601 luma over the pixel rectangle [x0,x1)x[y0,y1), clipped
  // to the image. Returns 0 for an empty intersection.
  double mean_luma(int x0, int y0, int x1, int y1) const;

  friend bool operator==(const DocumentImage&, const DocumentImage&) = default;

 private:
  std::size_t idx(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Decodes PNG or JPEG (sniffed from magic bytes). Alpha is flattened against
// white; grayscale is replicated to RGB. Throws IoError.
DocumentImage load_image(const std::filesystem::path& path);
DocumentImage decode_image(std::span<const std::uint8_t> bytes);

// PNG encoding with fixed settings (zlib level 9, no filter heuristics, no
// timestamps) so identical pixels always produce identical bytes.
std::vector<std::uint8_t> encode_png(const DocumentImage& image);
void write_png(const DocumentImage& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_jpeg(const DocumentImage& image, int quality);
DocumentImage decode_jpeg(std::span<const std::uint8_t> bytes);
DocumentImage decode_png(std::span<const std::uint8_t> bytes);

}  // namespace wmvqa
