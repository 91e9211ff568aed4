#include "tofr/depth_map.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace tofr {

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

DepthMap DepthMap::filled(int w, int h, float value) {
  DepthMap m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, value);
  return m;
}

namespace {

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::string pixels;
};

void write_pgm(const std::filesystem::path& path, int width, int height, int maxval,
               const std::string& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();

  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw Error(ErrorKind::kFormat, std::string("missing ") + what + where);
    return std::stoi(data.substr(start, pos - start));
  };

  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') {
    throw Error(ErrorKind::kFormat, "not a binary PGM (P5)" + where);
  }
  pos = 2;
  PgmImage img;
  img.width = read_int("width");
  img.height = read_int("height");
  img.maxval = read_int("maxval");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    throw Error(ErrorKind::kFormat, "malformed PGM header" + where);
  }
  ++pos;
  const std::size_t bytes_per_sample = img.maxval > 255 ? 2 : 1;
  const std::size_t expected = static_cast<std::size_t>(img.width) * img.height * bytes_per_sample;
  if (data.size() - pos != expected) {
    throw Error(ErrorKind::kFormat, "PGM pixel data has " + std::to_string(data.size() - pos) +
                                        " bytes, expected " + std::to_string(expected) + where);
  }
  img.pixels = data.substr(pos);
  return img;
}

}  // namespace

void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path) {
  std::string pixels;
  pixels.reserve(map.depth.size() * 2);
  for (std::size_t i = 0; i < map.depth.size(); ++i) {
    long v = 0;
    if (map.valid[i]) {
      v = std::max(1L, std::lround(map.depth[i]));
      if (v > 65535) {
        throw Error(ErrorKind::kFormat, "depth " + std::to_string(map.depth[i]) +
                                            " mm exceeds the 16-bit range for " + path.string());
      }
    }
    pixels.push_back(static_cast<char>((v >> 8) & 0xFF));
    pixels.push_back(static_cast<char>(v & 0xFF));
  }
  write_pgm(path, map.width, map.height, 65535, pixels);
}

DepthMap read_depth_pgm(const std::filesystem::path& path) {
  const PgmImage img = read_pgm(path);
  if (img.maxval != 65535) {
    throw Error(ErrorKind::kFormat, "depth PGM must have maxval 65535, got " +
                                        std::to_string(img.maxval) + " in " + path.string());
  }
  DepthMap map(img.width, img.height);
  for (std::size_t i = 0; i < map.depth.size(); ++i) {
    const unsigned hi = static_cast<unsigned char>(img.pixels[2 * i]);
    const unsigned lo = static_cast<unsigned char>(img.pixels[2 * i + 1]);
    const unsigned v = (hi << 8) | lo;
    map.depth[i] = static_cast<float>(v);
    map.valid[i] = v != 0 ? 1 : 0;
  }
  return map;
}

void write_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::string pixels(mask.bits.size(), '\0');
  for (std::size_t i = 0; i < mask.bits.size(); ++i) pixels[i] = mask.bits[i] ? static_cast<char>(255) : '\0';
  write_pgm(path, mask.width, mask.height, 255, pixels);
}

Mask read_mask_pgm(const std::filesystem::path& path) {
  const PgmImage img = read_pgm(path);
  if (img.maxval != 255) {
    throw Error(ErrorKind::kFormat, "mask PGM must have maxval 255, got " +
                                        std::to_string(img.maxval) + " in " + path.string());
  }
  Mask mask(img.width, img.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    mask.bits[i] = img.pixels[i] != '\0' ? 1 : 0;
  }
  return mask;
}

}  // namespace tofr
