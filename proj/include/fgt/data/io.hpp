#pragma once

#include <filesystem>
#include <vector>

#include "fgt/data/dataset.hpp"

namespace fgt {

/// Single-channel raster with values in [0,1], row-major.
struct GrayImage {
  Index width = 0;
  Index height = 0;
  std::vector<double> pixels;
};

/// Decodes PGM (P2/P5), PPM (P3/P6) or PNG. Colour is reduced to gray with
/// luma weights 0.299, 0.587, 0.114.
GrayImage read_image(const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centres and edge clamping.
GrayImage resize_bilinear(const GrayImage& img, Index width, Index height);

void write_pgm(const std::filesystem::path& path, const GrayImage& img);
/// 8-bit RGB PNG; used for fixtures.
void write_png_rgb(const std::filesystem::path& path, Index width, Index height,
                   const std::vector<std::uint8_t>& rgb);

struct PixelCsvSplits {
  Dataset train, val, test;
};

/// FER-style CSV: header row, then `emotion,pixels,usage` with 2304
/// space-separated 0..255 values. Usage Training/PublicTest/PrivateTest maps to
/// train/val/test. LF or CRLF line endings.
PixelCsvSplits load_pixel_csv(const std::filesystem::path& path);

/// Writes datasets back in the same grammar. Pixels are stored as round(255 * v).
void write_pixel_csv(const std::filesystem::path& path, const PixelCsvSplits& splits);

/// Tab-separated `relative_image_path  label_name  subject_id` rows; paths are
/// relative to the manifest's directory. Images become [1,48,48] in [0,1].
Dataset load_image_manifest(const std::filesystem::path& manifest_path);

}  // namespace fgt
