#include "redsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "redsr/errors.hpp"

namespace redsr {

Image Image::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
  if (y0 + h > height || x0 + w > width) {
    throw DimensionError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                         std::to_string(y0) + "," + std::to_string(x0) + ") exceeds " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  Image out(h, w, channels);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = at(c, y0 + y, x0 + x);
  return out;
}

Tensor to_batch(const std::vector<Image>& images) {
  if (images.empty()) throw ParameterError("to_batch: no images");
  const auto& f = images.front();
  std::vector<double> values;
  values.reserve(images.size() * f.values.size());
  for (const auto& img : images) {
    if (img.height != f.height || img.width != f.width || img.channels != f.channels) {
      throw DimensionError("to_batch: images differ in size");
    }
    values.insert(values.end(), img.values.begin(), img.values.end());
  }
  return Tensor({images.size(), f.channels, f.height, f.width}, std::move(values));
}

std::vector<Image> from_batch(const Tensor& batch) {
  if (batch.rank() != 4) throw DimensionError("from_batch: expected [N,C,H,W]");
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<Image> out;
  out.reserve(n);
  auto data = batch.data();
  for (std::size_t i = 0; i < n; ++i) {
    Image img(h, w, c);
    std::copy_n(data.begin() + static_cast<long>(i * c * h * w), c * h * w, img.values.begin());
    out.push_back(std::move(img));
  }
  return out;
}

namespace {

// Header tokens, skipping '#' comments.
std::size_t next_int(std::istream& is, const std::filesystem::path& path) {
  while (true) {
    int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(is >> v)) throw IoError("malformed PNM header: " + path.string());
  return v;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path.string());
  std::string magic(2, '\0');
  is.read(magic.data(), 2);
  std::size_t channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw IoError("unsupported image format (need P5/P6): " + path.string());
  }
  const std::size_t w = next_int(is, path), h = next_int(is, path), maxval = next_int(is, path);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw IoError("unsupported PNM geometry/maxval: " + path.string());
  }
  is.get();  // single whitespace before raster
  std::vector<unsigned char> raster(w * h * channels);
  is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (static_cast<std::size_t>(is.gcount()) != raster.size()) {
    throw IoError("truncated image data: " + path.string());
  }
  Image img(h, w, channels);
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = raster[(y * w + x) * channels + c] * inv;
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw DimensionError("write_pnm: need 1 or 3 channels");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raster(img.values.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        raster[(y * img.width + x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  os.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace redsr
