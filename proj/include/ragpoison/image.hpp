#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace ragpoison {

/// Dense RGB image, row-major (y, x, channel) interleaved, values in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0);
  Image(int height, int width, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return kChannels; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

  std::span<double> pixels() { return pixels_; }
  std::span<const double> pixels() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// True iff every pixel lies in [0, 1].
  bool in_unit_range() const;

  /// L-infinity distance; shapes must match.
  double max_abs_diff(const Image& other) const;
  double mean_abs_diff(const Image& other) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

using ImagePtr = std::shared_ptr<const Image>;

/// Bilinear resampling with half-pixel centers and clamped edges. Resampling
/// to the same size is the identity.
Image resize_bilinear(const Image& src, int height, int width);

/// 8-bit RGB PNG. Values are quantized with round(v * 255).
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Portable float map (binary "PF", little-endian, bottom-to-top rows).
/// Stores float32, so values are not range-checked on write.
void write_pfm(const Image& image, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

/// Dispatches on extension (.png / .pfm).
Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace ragpoison
