#include "objattr/image_io.hpp"

#include <png.h>

#include <atomic>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace objattr {

namespace {

std::vector<std::uint8_t> encode_png_raw(int height, int width, std::uint32_t format,
                                         std::span<const std::uint8_t> pixels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw IoError(std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw IoError(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// Skips whitespace and '#' comments in a netpbm header.
int read_pnm_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos]) != 0) {
      ++pos;
    } else {
      break;
    }
  }
  int value = 0;
  bool any = false;
  while (pos < bytes.size() && std::isdigit(bytes[pos]) != 0) {
    value = value * 10 + (bytes[pos] - '0');
    any = true;
    ++pos;
  }
  if (!any) throw IoError("netpbm: malformed header");
  return value;
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("ppm: not P6");
  std::size_t pos = 2;
  const int w = read_pnm_int(bytes, pos);
  const int h = read_pnm_int(bytes, pos);
  const int maxval = read_pnm_int(bytes, pos);
  ++pos;  // single whitespace after maxval
  if (maxval != 255) throw IoError("ppm: only maxval 255 supported");
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (w < 1 || h < 1 || bytes.size() < pos + need) throw IoError("ppm: truncated data");
  return Image(h, w, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + need));
}

std::atomic<std::uint64_t> g_tmp_counter{0};

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  return encode_png_raw(image.height(), image.width(), PNG_FORMAT_RGB, image.data());
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
    throw IoError(std::string("png decode: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  const int w = static_cast<int>(img.width);
  const int h = static_cast<int>(img.height);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  // Alpha is composited onto black.
  png_color black{0, 0, 0};
  if (png_image_finish_read(&img, &black, pixels.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw IoError(std::string("png decode: ") + img.message);
  }
  return Image(h, w, std::move(pixels));
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_binary(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw IoError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png(image));
}

void write_png_gray(const std::filesystem::path& path, int height, int width,
                    std::span<const std::uint8_t> values) {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidInput("gray buffer size does not match dimensions");
  }
  write_file_atomic(path, encode_png_raw(height, width, PNG_FORMAT_GRAY, values));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ostringstream os;
  os << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::string out = os.str();
  out.append(reinterpret_cast<const char*>(image.data().data()), image.data().size());
  write_file_atomic(path, out);
}

void write_pgm16(const std::filesystem::path& path, int height, int width,
                 std::span<const std::uint16_t> values) {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidInput("pgm buffer size does not match dimensions");
  }
  std::ostringstream os;
  os << "P5\n" << width << " " << height << "\n65535\n";
  std::string out = os.str();
  out.reserve(out.size() + values.size() * 2);
  for (auto v : values) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_file_atomic(path, out);
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& height, int& width) {
  const auto bytes = read_binary(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError("pgm: not P5");
  std::size_t pos = 2;
  width = read_pnm_int(bytes, pos);
  height = read_pnm_int(bytes, pos);
  const int maxval = read_pnm_int(bytes, pos);
  ++pos;
  if (width < 1 || height < 1) throw IoError("pgm: bad dimensions");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint16_t> out(n);
  if (maxval > 255) {
    if (bytes.size() < pos + 2 * n) throw IoError("pgm: truncated data");
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    }
  } else {
    if (bytes.size() < pos + n) throw IoError("pgm: truncated data");
    for (std::size_t i = 0; i < n; ++i) out[i] = bytes[pos + i];
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(contents.data()),
                              contents.size()));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
         << g_tmp_counter.fetch_add(1);
  std::filesystem::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(contents.data()),
              static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace objattr
