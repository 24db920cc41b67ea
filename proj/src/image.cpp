#include "ragpoison/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "ragpoison/error.hpp"

namespace ragpoison {

namespace fs = std::filesystem;

Image::Image(int height, int width, double fill)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(height) * width * kChannels, fill) {
  if (height <= 0 || width <= 0) throw ValidationError("image dimensions must be positive");
}

Image::Image(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height <= 0 || width <= 0) throw ValidationError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * kChannels)
    throw ValidationError("image pixel count does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x3");
}

bool Image::in_unit_range() const {
  return std::all_of(pixels_.begin(), pixels_.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

double Image::max_abs_diff(const Image& other) const {
  if (!same_shape(other)) throw ValidationError("image shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < pixels_.size(); ++i)
    m = std::max(m, std::abs(pixels_[i] - other.pixels_[i]));
  return m;
}

double Image::mean_abs_diff(const Image& other) const {
  if (!same_shape(other)) throw ValidationError("image shapes differ");
  if (pixels_.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pixels_.size(); ++i) s += std::abs(pixels_[i] - other.pixels_[i]);
  return s / static_cast<double>(pixels_.size());
}

Image resize_bilinear(const Image& src, int height, int width) {
  Image out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < Image::kChannels; ++c) {
        if (wy == 0.0 && wx == 0.0) {
          out.at(y, x, c) = src.at(y0, x0, c);
          continue;
        }
        const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  if (mode[0] == 'r' && !fs::exists(path)) throw ValidationError("image file not found: " + path.string());
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw RuntimeError("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

void write_png(const Image& image, const fs::path& path) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw RuntimeError("libpng: cannot allocate write structs");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeError("libpng: failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw RuntimeError("write failed: " + path.string());
}

Image read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw RuntimeError("libpng: cannot allocate read structs");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("not a readable PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  // Normalize everything to 8- or 16-bit RGB.
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const bool wide = png_get_bit_depth(png, info) == 16;
  std::vector<png_byte> row(rowbytes);
  img = Image(height, width);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * 3 + c;
        if (wide) {
          std::uint16_t v;
          std::memcpy(&v, &row[i * 2], 2);
          img.at(y, x, c) = v / 65535.0;
        } else {
          img.at(y, x, c) = row[i] / 255.0;
        }
      }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_pfm(const Image& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out << "PF\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width()) * 3);
  for (int y = image.height() - 1; y >= 0; --y) {
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<float>(image.at(y, x, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw RuntimeError("write failed: " + path.string());
}

Image read_pfm(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("image file not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (magic != "PF" || width <= 0 || height <= 0 || scale >= 0.0)
    throw ValidationError("unsupported PFM header (need little-endian RGB 'PF'): " + path.string());
  Image img(height, width);
  std::vector<float> row(static_cast<std::size_t>(width) * 3);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw ValidationError("truncated PFM: " + path.string());
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c];
  }
  return img;
}

Image read_image(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("image file not found: " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pfm") return read_pfm(path);
  throw ValidationError("unsupported image format: " + path.string());
}

void write_image(const Image& image, const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(image, path);
  if (ext == ".pfm") return write_pfm(image, path);
  throw ValidationError("unsupported image format: " + path.string());
}

}  // namespace ragpoison
