#include "macnet/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "macnet/error.hpp"

namespace macnet {

namespace {

// PPM header tokens are separated by whitespace; '#' starts a comment
// running to end of line.
std::string next_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::int64_t parse_positive(const std::string& tok, const char* what) {
  if (tok.empty()) throw MalformedImageError(std::string("ppm: missing ") + what);
  for (const char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw MalformedImageError(std::string("ppm: non-numeric ") + what + " '" + tok + "'");
    }
  }
  const std::int64_t v = std::stoll(tok);
  if (v <= 0) throw MalformedImageError(std::string("ppm: non-positive ") + what);
  return v;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("image not found: " + path.string());

  char magic[2];
  is.read(magic, 2);
  if (!is) throw MalformedImageError("ppm: truncated magic in " + path.string());
  if (magic[0] != 'P' || magic[1] != '6') {
    throw UnsupportedImageError("unsupported image format (expected binary P6): " + path.string());
  }

  const std::int64_t width = parse_positive(next_token(is), "width");
  const std::int64_t height = parse_positive(next_token(is), "height");
  const std::int64_t maxval = parse_positive(next_token(is), "maxval");
  if (maxval != 255) {
    throw UnsupportedImageError("ppm: only 8-bit samples supported, maxval=" +
                                std::to_string(maxval) + " in " + path.string());
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::vector<unsigned char> raw(static_cast<std::size_t>(3 * width * height));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw MalformedImageError("ppm: truncated pixel data in " + path.string());
  }

  Image img = Image::make(height, width);
  const std::int64_t plane = height * width;
  for (std::int64_t i = 0; i < plane; ++i) {
    img.data[static_cast<std::size_t>(i)] = static_cast<float>(raw[3 * i]) / 255.0f;
    img.data[static_cast<std::size_t>(plane + i)] = static_cast<float>(raw[3 * i + 1]) / 255.0f;
    img.data[static_cast<std::size_t>(2 * plane + i)] = static_cast<float>(raw[3 * i + 2]) / 255.0f;
  }
  return img;
}

void write_image_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image: " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::int64_t plane = image.height * image.width;
  std::vector<unsigned char> raw(static_cast<std::size_t>(3 * plane));
  auto quantize = [](float v) {
    const long q = std::lround(static_cast<double>(v) * 255.0);
    return static_cast<unsigned char>(std::min(255L, std::max(0L, q)));
  };
  for (std::int64_t i = 0; i < plane; ++i) {
    raw[static_cast<std::size_t>(3 * i)] = quantize(image.data[static_cast<std::size_t>(i)]);
    raw[static_cast<std::size_t>(3 * i + 1)] =
        quantize(image.data[static_cast<std::size_t>(plane + i)]);
    raw[static_cast<std::size_t>(3 * i + 2)] =
        quantize(image.data[static_cast<std::size_t>(2 * plane + i)]);
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("short write: " + path.string());
}

}  // namespace macnet
