#include "patchlikely/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "patchlikely/error.hpp"

namespace patchlikely {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

[[noreturn]] void fail(ErrorKind kind, const fs::path& path, const std::string& why) {
  throw Error(kind, path.string() + ": " + why);
}

Image8 load_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorKind::kFormat, path, std::string("cannot decode PNG: ") + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ErrorKind::kUnsupported, path, "unsupported bit depth (16-bit PNG); only 8-bit images are accepted");
  }
  const bool has_alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  image.format = PNG_FORMAT_RGBA;
  std::vector<uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    fail(ErrorKind::kFormat, path, std::string("corrupt PNG: ") + image.message);
  }
  if (has_alpha) warn(path.string() + ": alpha channel dropped");
  Image8 out(static_cast<int>(image.width), static_cast<int>(image.height));
  for (size_t i = 0, n = static_cast<size_t>(out.width) * out.height; i < n; ++i) {
    std::memcpy(&out.pixels[i * 3], &rgba[i * 4], 3);
  }
  return out;
}

void write_png(const uint8_t* data, int width, int height, png_uint_32 format, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    fail(ErrorKind::kIo, path, std::string("cannot write PNG: ") + image.message);
  }
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Image8 load_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, path, "cannot open file");
  if (ppm_token(in) != "P6") fail(ErrorKind::kFormat, path, "not a binary PPM (P6) file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::exception&) {
    fail(ErrorKind::kFormat, path, "malformed PPM header");
  }
  if (w < 1 || h < 1) fail(ErrorKind::kFormat, path, "PPM dimensions must be positive");
  if (maxval != 255) fail(ErrorKind::kUnsupported, path, "unsupported bit depth (PPM maxval " + std::to_string(maxval) + ")");
  Image8 out(w, h);
  in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.pixels.size())) {
    fail(ErrorKind::kFormat, path, "truncated PPM pixel data");
  }
  return out;
}

void save_ppm(const Image8& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, path, "cannot open for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(ErrorKind::kIo, path, "write failed");
}

}  // namespace

Image8::Image8(int w, int h, uint8_t fill) : width(w), height(h) {
  if (w < 1 || h < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "image dimensions must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
  }
  pixels.assign(static_cast<size_t>(w) * h * 3, fill);
}

Image8 Image8::crop(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > width || y + h > height) {
    throw Error(ErrorKind::kInvalidArgument, "crop " + std::to_string(w) + "x" + std::to_string(h) + " at (" +
                                                 std::to_string(x) + "," + std::to_string(y) + ") outside " +
                                                 std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  Image8 out(w, h);
  for (int r = 0; r < h; ++r) {
    std::memcpy(&out.pixels[static_cast<size_t>(r) * w * 3], &pixels[(static_cast<size_t>(y + r) * width + x) * 3],
                static_cast<size_t>(w) * 3);
  }
  return out;
}

Image8 load_image(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kIo, path, "no such file");
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm") return load_ppm(path);
  fail(ErrorKind::kUnsupported, path, "unsupported image format '" + ext + "' (expected .png or .ppm)");
}

void save_image(const Image8& image, const fs::path& path) {
  if (image.pixels.size() != static_cast<size_t>(image.width) * image.height * 3 || image.width < 1) {
    fail(ErrorKind::kInvalidArgument, path, "image buffer does not match its dimensions");
  }
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(image.pixels.data(), image.width, image.height, PNG_FORMAT_RGB, path);
  if (ext == ".ppm") return save_ppm(image, path);
  fail(ErrorKind::kUnsupported, path, "unsupported image format '" + ext + "' (expected .png or .ppm)");
}

void save_gray_png(const std::vector<uint8_t>& values, int width, int height, const fs::path& path) {
  if (width < 1 || height < 1 || values.size() != static_cast<size_t>(width) * height) {
    fail(ErrorKind::kInvalidArgument, path, "gray buffer does not match its dimensions");
  }
  write_png(values.data(), width, height, PNG_FORMAT_GRAY, path);
}

Hsv rgb_to_hsv(Rgb8 p) {
  const int mx = std::max({p.r, p.g, p.b});
  const int mn = std::min({p.r, p.g, p.b});
  const double delta = mx - mn;
  Hsv out{0.0, 0.0, mx / 255.0};
  if (mx == 0 || delta == 0) return out;
  out.s = delta / mx;
  double h;
  if (mx == p.r) {
    h = (p.g - p.b) / delta;
  } else if (mx == p.g) {
    h = 2.0 + (p.b - p.r) / delta;
  } else {
    h = 4.0 + (p.r - p.g) / delta;
  }
  h *= 60.0;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

Rgb8 hsv_to_rgb(const Hsv& hsv) {
  const double v = std::clamp(hsv.v, 0.0, 1.0) * 255.0;
  const double s = std::clamp(hsv.s, 0.0, 1.0);
  double h = std::fmod(hsv.h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto to8 = [](double u) { return static_cast<uint8_t>(std::clamp(std::lround(u), 0L, 255L)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

std::vector<fs::path> scan_corpus(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::kIo, dir, "corpus directory does not exist");
  std::vector<fs::path> out;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const std::string ext = lower_extension(it->path());
    if (ext == ".png" || ext == ".ppm") out.push_back(it->path());
  }
  if (ec) fail(ErrorKind::kIo, dir, "cannot scan corpus: " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace patchlikely
