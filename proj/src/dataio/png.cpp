#include "faceparse/dataio/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"

namespace faceparse::dataio {

namespace {

struct MemoryReader {
  const std::byte* data;
  std::size_t size;
  std::size_t pos;
};

struct ErrorSink {
  char message[256] = {0};
};

void on_error(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  std::strncpy(sink->message, msg, sizeof sink->message - 1);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (n > r->size - r->pos) png_error(png, "unexpected end of data");
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

void write_callback(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<std::byte>*>(png_get_io_ptr(png));
  const auto* b = reinterpret_cast<const std::byte*>(in);
  out->insert(out->end(), b, b + n);
}

void flush_callback(png_structp) {}

// Runs the libpng decode. C++ objects that must survive a longjmp are owned
// by the caller; on failure this returns false with sink.message filled.
bool decode_into(const MemoryReader& source, ErrorSink& sink, RawImage& img, std::vector<png_bytep>& rows,
                 int& bit_depth_out, int& color_type_out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
  if (!png) {
    std::strcpy(sink.message, "cannot allocate decoder");
    return false;
  }
  png_infop info = png_create_info_struct(png);
  MemoryReader reader = source;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (sink.message[0] == 0) std::strcpy(sink.message, "decoder failure");
    return false;
  }
  png_set_read_fn(png, &reader, read_callback);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int ctype = png_get_color_type(png, info);
  bit_depth_out = depth;
  color_type_out = ctype;
  const bool palette_ok = ctype == PNG_COLOR_TYPE_PALETTE && depth <= 8;
  if (depth != 8 && !palette_ok) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;  // caller reports the unsupported depth
  }
  if (ctype == PNG_COLOR_TYPE_PALETTE && depth < 8) png_set_packing(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  img.width = w;
  img.height = h;
  img.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  img.pixels.resize(rowbytes * h);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = img.pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_into(std::vector<std::byte>& out, ErrorSink& sink, std::size_t width, std::size_t height,
                 std::size_t channels, std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
  if (!png) {
    std::strcpy(sink.message, "cannot allocate encoder");
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    if (sink.message[0] == 0) std::strcpy(sink.message, "encoder failure");
    return false;
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_BASE, PNG_FILTER_TYPE_BASE);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

PngColor color_of(int ctype) {
  switch (ctype) {
    case PNG_COLOR_TYPE_GRAY: return PngColor::gray;
    case PNG_COLOR_TYPE_RGB: return PngColor::rgb;
    case PNG_COLOR_TYPE_RGB_ALPHA: return PngColor::rgba;
    case PNG_COLOR_TYPE_PALETTE: return PngColor::palette;
    default: return PngColor::gray_alpha;
  }
}

}  // namespace

RawImage decode_png(std::span<const std::byte> bytes, const std::string& what) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw FormatError(what + ": not a PNG file");
  }
  ErrorSink sink;
  RawImage img;
  std::vector<png_bytep> rows;
  int depth = 0, ctype = 0;
  if (!decode_into({bytes.data(), bytes.size(), 0}, sink, img, rows, depth, ctype)) {
    throw FormatError(what + ": invalid PNG: " + sink.message);
  }
  if (img.width == 0) {
    throw UnsupportedImageError(what + ": unsupported bit depth " + std::to_string(depth) + " (only 8-bit PNG)");
  }
  img.color = color_of(ctype);
  return img;
}

std::vector<std::byte> encode_png(std::size_t width, std::size_t height, std::size_t channels,
                                  std::span<const std::uint8_t> pixels) {
  if (channels != 1 && channels != 3) throw ShapeError("encode_png: channels must be 1 or 3");
  if (width == 0 || height == 0) throw ShapeError("encode_png: empty image");
  if (pixels.size() != width * height * channels) throw ShapeError("encode_png: pixel count does not match");
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels.data() + y * width * channels);
  }
  std::vector<std::byte> out;
  ErrorSink sink;
  if (!encode_into(out, sink, width, height, channels, rows)) {
    throw Error(std::string("PNG encoding failed: ") + sink.message);
  }
  return out;
}

RawImage read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path), path.string()); }

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, std::size_t channels,
               std::span<const std::uint8_t> pixels) {
  write_file_atomic(path, encode_png(width, height, channels, pixels));
}

}  // namespace faceparse::dataio
