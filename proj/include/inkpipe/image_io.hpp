#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#ifdef INKPIPE_HAVE_JPEG
#include <csetjmp>
#include <jpeglib.h>
#endif

#include "inkpipe/raster.hpp"

namespace inkpipe::io {

namespace detail {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

inline ImageBuffer finish_png_read(png_image& image, const std::string& label) {
  PngImageGuard guard{&image};
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = colour ? 3 : 1;
  if (image.width == 0 || image.height == 0) {
    throw Error(ErrorCode::Decode, label + ": empty PNG");
  }
  std::vector<Sample> data(PNG_IMAGE_SIZE(image));
  // Transparent regions land on white paper, not black.
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, data.data(), 0, nullptr)) {
    throw Error(ErrorCode::Decode, label + ": " + image.message);
  }
  return ImageBuffer(static_cast<int>(image.width), static_cast<int>(image.height), channels,
                     std::move(data));
}

}  // namespace detail

inline ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::Decode, "png: " + msg);
  }
  return detail::finish_png_read(image, "png");
}

inline ImageBuffer read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::Decode, path.string() + ": " + msg);
  }
  return detail::finish_png_read(image, path.string());
}

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.data().data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::Io, "png encode: " + msg);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.data().data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::Io, "png encode: " + msg);
  }
  out.resize(size);
  return out;
}

inline void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::Io, "short write to " + path.string());
  }
}

constexpr bool jpeg_supported() noexcept {
#ifdef INKPIPE_HAVE_JPEG
  return true;
#else
  return false;
#endif
}

#ifdef INKPIPE_HAVE_JPEG
namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

}  // namespace detail
#endif

inline ImageBuffer read_jpeg(const std::filesystem::path& path) {
#ifdef INKPIPE_HAVE_JPEG
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) {
    throw Error(ErrorCode::Io, "cannot open " + path.string());
  }
  jpeg_decompress_struct cinfo;
  detail::JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = &detail::jpeg_error_exit;
  // Nothing with a non-trivial destructor may be live between setjmp and the
  // last libjpeg call.
  std::vector<Sample> data;
  int width = 0, height = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::Decode, path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  data.resize(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = data.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return ImageBuffer(width, height, channels, std::move(data));
#else
  throw Error(ErrorCode::Decode, path.string() + ": built without JPEG support");
#endif
}

inline bool is_supported_input(const std::filesystem::path& path) {
  const auto ext = detail::lower_extension(path);
  return ext == ".png" || ((ext == ".jpg" || ext == ".jpeg") && jpeg_supported());
}

/// Reads PNG, or JPEG when compiled in, by file extension.
inline ImageBuffer read_image(const std::filesystem::path& path) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".jpg" || ext == ".jpeg") {
    return read_jpeg(path);
  }
  return read_png(path);
}

}  // namespace inkpipe::io
