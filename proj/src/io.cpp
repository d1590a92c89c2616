#include "fgt/data/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace fgt {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Netpbm header tokens, skipping '#' comments.
class PnmReader {
 public:
  PnmReader(const std::vector<std::uint8_t>& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  long token() {
    skip_space();
    long value = 0;
    bool any = false;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      any = true;
    }
    if (!any) throw DataError(name_ + ": malformed netpbm header");
    return value;
  }

  void skip_single_whitespace() { ++pos_; }
  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
  std::size_t pos_ = 2;
};

GrayImage decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  const char kind = static_cast<char>(bytes[1]);
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  PnmReader reader(bytes, name);
  GrayImage img;
  img.width = reader.token();
  img.height = reader.token();
  const long maxval = reader.token();
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535)
    throw DataError(name + ": invalid netpbm dimensions or maxval");
  const std::size_t channels = color ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(img.width * img.height) * channels;
  std::vector<double> raw(count);
  if (binary) {
    reader.skip_single_whitespace();
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (reader.pos() + count * bps > bytes.size()) throw DataError(name + ": truncated pixel data");
    const std::uint8_t* p = bytes.data() + reader.pos();
    for (std::size_t i = 0; i < count; ++i)
      raw[i] = bps == 2 ? double(p[2 * i] << 8 | p[2 * i + 1]) : double(p[i]);
  } else {
    for (std::size_t i = 0; i < count; ++i) raw[i] = double(reader.token());
  }
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  const double scale = 1.0 / double(maxval);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = color ? luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) * scale : raw[i] * scale;
    img.pixels[i] = std::clamp(img.pixels[i], 0.0, 1.0);
  }
  return img;
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DataError(name + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError(name + ": " + message);
  }
  GrayImage img;
  img.width = image.width;
  img.height = image.height;
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = color ? luma(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]) / 255.0 : buffer[i] / 255.0;
  return img;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

Sample sample_from_gray(const GrayImage& img) {
  const GrayImage resized =
      (img.width == kImageSide && img.height == kImageSide) ? img : resize_bilinear(img, kImageSide, kImageSide);
  Sample s;
  s.image = Tensor({1, kImageSide, kImageSide});
  std::copy(resized.pixels.begin(), resized.pixels.end(), s.image.data());
  return s;
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const std::string name = path.string();
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && std::string_view("2356").find(char(bytes[1])) != std::string_view::npos)
    return decode_pnm(bytes, name);
  throw DataError(name + ": unsupported image format (expected PGM, PPM or PNG)");
}

GrayImage resize_bilinear(const GrayImage& img, Index width, Index height) {
  if (img.width <= 0 || img.height <= 0) throw DataError("resize: empty image");
  GrayImage out{width, height, std::vector<double>(static_cast<std::size_t>(width * height))};
  const double sx = double(img.width) / double(width), sy = double(img.height) / double(height);
  auto at = [&](Index x, Index y) { return img.pixels[static_cast<std::size_t>(y * img.width + x)]; };
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(img.height - 1));
    const Index y0 = static_cast<Index>(fy), y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - double(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(img.width - 1));
      const Index x0 = static_cast<Index>(fx), x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - double(x0);
      const double top = at(x0, y0) + wx * (at(x1, y0) - at(x0, y0));
      const double bottom = at(x0, y1) + wx * (at(x1, y1) - at(x0, y1));
      out.pixels[static_cast<std::size_t>(y * width + x)] = top + wy * (bottom - top);
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
}

void write_png_rgb(const std::filesystem::path& path, Index width, Index height,
                   const std::vector<std::uint8_t>& rgb) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr))
    throw Error("cannot write " + path.string() + ": " + image.message);
}

PixelCsvSplits load_pixel_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string stem = path.stem().string();
  PixelCsvSplits out{{stem + "/train", {}, kClassNames}, {stem + "/val", {}, kClassNames},
                     {stem + "/test", {}, kClassNames}};
  std::string line;
  std::size_t row = 0;
  constexpr Index kPixels = kImageSide * kImageSide;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (row == 1 || line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    const auto c1 = line.find(','), c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) throw DataError(where + ": expected 3 comma-separated fields");

    int emotion = -1;
    const auto ep = std::from_chars(line.data(), line.data() + c1, emotion);
    if (ep.ec != std::errc() || ep.ptr != line.data() + c1 || emotion < 0 || emotion > 6)
      throw DataError(where + ": emotion must be an integer in 0..6");

    std::string usage = line.substr(c2 + 1);
    Dataset* target = nullptr;
    if (usage == "Training") target = &out.train;
    else if (usage == "PublicTest") target = &out.val;
    else if (usage == "PrivateTest") target = &out.test;
    else throw DataError(where + ": unknown usage tag '" + usage + "'");

    std::string_view pixels(line.data() + c1 + 1, c2 - c1 - 1);
    if (pixels.size() >= 2 && pixels.front() == '"' && pixels.back() == '"') pixels = pixels.substr(1, pixels.size() - 2);
    Sample s;
    s.image = Tensor({1, kImageSide, kImageSide});
    s.label = emotion;
    s.origin = stem;
    Index count = 0;
    const char* p = pixels.data();
    const char* end = pixels.data() + pixels.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p >= end) break;
      int value = -1;
      auto r = std::from_chars(p, end, value);
      if (r.ec != std::errc() || value < 0 || value > 255 || (r.ptr < end && *r.ptr != ' '))
        throw DataError(where + ": invalid pixel value");
      if (count < kPixels) s.image[count] = value / 255.0;
      ++count;
      p = r.ptr;
    }
    if (count != kPixels)
      throw DataError(where + ": expected " + std::to_string(kPixels) + " pixels, found " + std::to_string(count));
    target->samples.push_back(std::move(s));
  }
  return out;
}

void write_pixel_csv(const std::filesystem::path& path, const PixelCsvSplits& splits) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "emotion,pixels,Usage\n";
  const std::pair<const Dataset*, const char*> parts[] = {
      {&splits.train, "Training"}, {&splits.val, "PublicTest"}, {&splits.test, "PrivateTest"}};
  for (const auto& [ds, usage] : parts)
    for (const auto& s : ds->samples) {
      out << s.label << ',';
      for (Index i = 0; i < s.image.size(); ++i)
        out << (i ? " " : "") << std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0);
      out << ',' << usage << '\n';
    }
}

Dataset load_image_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  Dataset ds{manifest_path.stem().string(), {}, kClassNames};
  std::set<std::string> seen;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = manifest_path.string() + " row " + std::to_string(row);
    const auto fields = split_tabs(line);
    if (fields.size() != 3) throw DataError(where + ": expected 3 tab-separated fields");
    if (!seen.insert(fields[0]).second) throw DataError(where + ": duplicate row for '" + fields[0] + "'");
    int label;
    try {
      label = class_index(fields[1]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    GrayImage img;
    try {
      img = read_image(base / fields[0]);
    } catch (const DataError& e) {
      throw DataError(where + ": unreadable image: " + e.what());
    }
    Sample s = sample_from_gray(img);
    s.label = label;
    s.subject_id = fields[2];
    s.origin = ds.name;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace fgt
