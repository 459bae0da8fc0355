#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "mcfuse/error.hpp"
#include "mcfuse/imageio.hpp"

namespace mcfuse::imageio {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path, std::size_t limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  if (limit == 0) {
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  } else {
    bytes.resize(limit);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
    bytes.resize(static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// ---- JPEG ----------------------------------------------------------------

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// libjpeg reports errors by longjmp; nothing with a destructor may live
// between setjmp and the calls that can fail, so buffers are owned by the
// caller.
bool jpeg_decode_into(std::span<const std::uint8_t> bytes, RawImage& out, std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    message = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool jpeg_encode_into(const RawImage& img, int quality, unsigned char** buf, unsigned long* size,
                      std::string& message) {
  jpeg_compress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    message = err.message;
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buf, size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  cinfo.optimize_coding = TRUE;
  if (quality >= 95) {
    cinfo.comp_info[0].h_samp_factor = 1;
    cinfo.comp_info[0].v_samp_factor = 1;
  } else {
    cinfo.comp_info[0].h_samp_factor = 2;
    cinfo.comp_info[0].v_samp_factor = 2;
  }
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(img.pixels.data() +
                                     static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

ImageInfo jpeg_probe(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.mgr.emit_message = jpeg_silent;
  ImageInfo info;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return {};
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  info.width = static_cast<int>(cinfo.image_width);
  info.height = static_cast<int>(cinfo.image_height);
  jpeg_destroy_decompress(&cinfo);
  return info;
}

// ---- PNG -----------------------------------------------------------------

RawImage png_decode(std::span<const std::uint8_t> bytes) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size()))
    throw DecodeError(std::string("png: ") + pi.message);
  if (pi.width == 0 || pi.height == 0) {
    png_image_free(&pi);
    throw DecodeError("png: empty image");
  }
  RawImage img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  // PNG_FORMAT_RGB would composite alpha onto a background; read RGBA and
  // discard the fourth channel instead. Gray expands to equal channels.
  pi.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba;
  rgba.resize(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, rgba.data(), 0, nullptr))
    throw DecodeError(std::string("png: ") + pi.message);
  for (std::size_t i = 0, n = static_cast<std::size_t>(img.width) * img.height; i < n; ++i) {
    img.pixels[i * 3] = rgba[i * 4];
    img.pixels[i * 3 + 1] = rgba[i * 4 + 1];
    img.pixels[i * 3 + 2] = rgba[i * 4 + 2];
  }
  return img;
}

std::vector<std::uint8_t> png_encode(int width, int height, std::uint32_t format, const std::uint8_t* data) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(width);
  pi.height = static_cast<png_uint_32>(height);
  pi.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, data, 0, nullptr))
    throw IoError(std::string("png encode: ") + pi.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, data, 0, nullptr))
    throw IoError(std::string("png encode: ") + pi.message);
  out.resize(size);
  return out;
}

}  // namespace

RawImage decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return png_decode(bytes);
  if (is_jpeg(bytes)) {
    RawImage img;
    std::string message;
    if (!jpeg_decode_into(bytes, img, message)) throw DecodeError("jpeg: " + message);
    if (!img.valid()) throw DecodeError("jpeg: empty image");
    return img;
  }
  throw DecodeError("unsupported image format");
}

RawImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

ImageInfo probe_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ImageInfo info;
  if (is_png(bytes)) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
      info = {static_cast<int>(pi.width), static_cast<int>(pi.height)};
      png_image_free(&pi);
    }
  } else if (is_jpeg(bytes)) {
    info = jpeg_probe(bytes);
  }
  if (info.width < 1 || info.height < 1) throw DecodeError(path.string() + ": cannot read dimensions");
  return info;
}

std::vector<std::uint8_t> encode_png(const RawImage& img) {
  if (!img.valid()) throw ContractError("encode_png: invalid image");
  return png_encode(img.width, img.height, PNG_FORMAT_RGB, img.pixels.data());
}

void save_png(const RawImage& img, const std::filesystem::path& path) {
  write_file(path, encode_png(img));
}

void save_png_gray(int width, int height, std::span<const std::uint8_t> values,
                   const std::filesystem::path& path) {
  if (width < 1 || height < 1 || values.size() != static_cast<std::size_t>(width) * height)
    throw ContractError("save_png_gray: size mismatch");
  write_file(path, png_encode(width, height, PNG_FORMAT_GRAY, values.data()));
}

std::vector<std::uint8_t> encode_jpeg(const RawImage& img, QualityFactor qf) {
  if (!img.valid()) throw ContractError("encode_jpeg: invalid image");
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  std::string message;
  const bool ok = jpeg_encode_into(img, qf.value(), &buf, &size, message);
  std::vector<std::uint8_t> out;
  if (ok && buf) out.assign(buf, buf + size);
  std::free(buf);
  if (!ok) throw RecompressionError("jpeg encode: " + message);
  return out;
}

void save_jpeg(const RawImage& img, QualityFactor qf, const std::filesystem::path& path) {
  write_file(path, encode_jpeg(img, qf));
}

}  // namespace mcfuse::imageio
