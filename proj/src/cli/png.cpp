#include "msf/cli/png.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "msf/error.hpp"

namespace msf::cli {

std::vector<std::uint8_t> window_to_gray(const Image2D& img, double lo, double hi) {
  std::vector<std::uint8_t> px(img.data.size(), 128);
  if (!(hi > lo)) return px;
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::round((img.data[i] - lo) * scale);
    px[i] = static_cast<std::uint8_t>(v <= 0.0 ? 0.0 : (v >= 255.0 ? 255.0 : v));
  }
  return px;
}

void write_png_gray(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                    const std::vector<std::uint8_t>& pixels) {
  if (rows == 0 || cols == 0 || pixels.size() != rows * cols)
    throw InvalidInput("png: pixel count does not match " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write '" + path.string() + "'");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (std::size_t r = 0; r < rows; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * cols));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace msf::cli
