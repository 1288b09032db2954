#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saldrn/tensor.hpp"

namespace saldrn {

/// Interleaved 8-bit RGB raster.
struct Image8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> rgb;
};

/// Decodes PNG/TIFF/JPEG as 8-bit RGB. Inputs with more than 3 bands keep
/// the first 3; 16-bit inputs are rescaled.
Image8 read_image8(const std::string& path);
/// Single-channel 8-bit decode.
Image8 read_gray8(const std::string& path);
/// True when the file has a recognised raster signature.
bool is_decodable_image(const std::string& path);

/// 1 x 3 x h x w tensor in [0, 1] from a crop of an 8-bit image.
Tensor<float> to_tensor(const Image8& img, int y0 = 0, int x0 = 0, int h = -1, int w = -1);
Tensor<float> read_image(const std::string& path);

/// Writes a 1 x {1,3} x H x W tensor as 8-bit PNG after clamping to [0, 1].
void write_image(const std::string& path, const Tensor<float>& img);

/// Indexed-color PNG, one palette entry per distinct index value.
void write_palette_png(const std::string& path, int h, int w, const std::vector<std::uint8_t>& index,
                       const std::vector<std::uint32_t>& palette_rgb);

/// Separable bicubic resampling (a = -0.5) with an antialias prefilter on
/// downscaling axes. Evaluated in double; values are not clamped.
Tensor<float> resize_bicubic(const Tensor<float>& in, int out_h, int out_w);

/// Bicubic downsample by factor r to round(H/r) x round(W/r), clamped to
/// [0, 1]. Identity when the size does not change.
Tensor<float> degrade_bicubic(const Tensor<float>& hr, double r);

}  // namespace saldrn
