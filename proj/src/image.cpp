#include "saldrn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "saldrn/errors.hpp"

namespace saldrn {
namespace {

cv::Mat load_raw(const std::string& path) {
  cv::Mat m;
  try {
    m = cv::imread(path, cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  } catch (const cv::Exception&) {
    m = cv::Mat();
  }
  if (m.empty()) throw IoError("cannot decode image " + path);
  if (m.depth() == CV_16U) {
    m.convertTo(m, CV_8U, 1.0 / 257.0);
  } else if (m.depth() == CV_32F || m.depth() == CV_64F) {
    m.convertTo(m, CV_8U, 255.0);
  } else if (m.depth() != CV_8U) {
    m.convertTo(m, CV_8U);
  }
  return m;
}

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

// Per-output-sample kernel taps; downscaling stretches the kernel by the
// scale factor and renormalises at the borders.
Taps make_taps(int in, int out) {
  Taps t;
  t.first.resize(out);
  t.weights.resize(out);
  const double scale = static_cast<double>(in) / out;
  const double stretch = std::max(scale, 1.0);
  const double support = 2.0 * stretch;
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support + 0.5)));
    const int hi = std::min(in, static_cast<int>(std::floor(center + support + 0.5)));
    std::vector<double> w;
    double sum = 0;
    for (int j = lo; j < hi; ++j) {
      const double v = cubic((j - center + 0.5) / stretch);
      w.push_back(v);
      sum += v;
    }
    if (sum != 0)
      for (double& v : w) v /= sum;
    t.first[i] = lo;
    t.weights[i] = std::move(w);
  }
  return t;
}

}  // namespace

Image8 read_image8(const std::string& path) {
  cv::Mat m = load_raw(path);
  const int ch = m.channels();
  if (ch < 3) throw IoError("image " + path + " has fewer than 3 channels");
  Image8 img;
  img.h = m.rows;
  img.w = m.cols;
  img.rgb.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  // OpenCV orders 3/4-band rasters as BGR(A); wider rasters keep file order.
  const bool bgr = ch <= 4;
  for (int y = 0; y < img.h; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* px = row + static_cast<std::size_t>(x) * ch;
      std::uint8_t* dst = img.rgb.data() + (static_cast<std::size_t>(y) * img.w + x) * 3;
      dst[0] = bgr ? px[2] : px[0];
      dst[1] = px[1];
      dst[2] = bgr ? px[0] : px[2];
    }
  }
  return img;
}

Image8 read_gray8(const std::string& path) {
  cv::Mat m = load_raw(path);
  Image8 img;
  img.h = m.rows;
  img.w = m.cols;
  img.rgb.resize(static_cast<std::size_t>(img.h) * img.w);
  const int ch = m.channels();
  for (int y = 0; y < img.h; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* px = row + static_cast<std::size_t>(x) * ch;
      int v = px[0];
      if (ch >= 3) v = (px[0] + px[1] + px[2] + 1) / 3;
      img.rgb[static_cast<std::size_t>(y) * img.w + x] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

bool is_decodable_image(const std::string& path) {
  try {
    return cv::haveImageReader(path);
  } catch (const cv::Exception&) {
    return false;
  }
}

Tensor<float> to_tensor(const Image8& img, int y0, int x0, int h, int w) {
  if (h < 0) h = img.h - y0;
  if (w < 0) w = img.w - x0;
  if (y0 < 0 || x0 < 0 || y0 + h > img.h || x0 + w > img.w) throw ContractViolation("image crop out of bounds");
  const int ch = static_cast<int>(img.rgb.size() / (static_cast<std::size_t>(img.h) * img.w));
  Tensor<float> out({1, ch, h, w});
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(0, c, y, x) =
            img.rgb[(static_cast<std::size_t>(y0 + y) * img.w + x0 + x) * ch + c] / 255.0f;
  return out;
}

Tensor<float> read_image(const std::string& path) { return to_tensor(read_image8(path)); }

void write_image(const std::string& path, const Tensor<float>& img) {
  if (img.n() != 1 || (img.c() != 1 && img.c() != 3)) {
    throw ContractViolation("write_image expects a 1 x {1,3} x H x W tensor");
  }
  const int ch = img.c();
  cv::Mat m(img.h(), img.w(), ch == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.h(); ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.w(); ++x)
      for (int c = 0; c < ch; ++c) {
        const float v = std::clamp(img.at(0, c, y, x), 0.0f, 1.0f);
        const int dst_c = ch == 3 ? 2 - c : 0;
        row[static_cast<std::size_t>(x) * ch + dst_c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path, m);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw IoError("cannot write image " + path);
}

void write_palette_png(const std::string& path, int h, int w, const std::vector<std::uint8_t>& index,
                       const std::vector<std::uint32_t>& palette_rgb) {
  if (index.size() != static_cast<std::size_t>(h) * w) throw ContractViolation("palette image size mismatch");
  if (palette_rgb.empty() || palette_rgb.size() > 256) throw ContractViolation("palette must hold 1..256 colors");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write image " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> pal(palette_rgb.size());
  for (std::size_t i = 0; i < pal.size(); ++i) {
    pal[i].red = static_cast<png_byte>((palette_rgb[i] >> 16) & 0xff);
    pal[i].green = static_cast<png_byte>((palette_rgb[i] >> 8) & 0xff);
    pal[i].blue = static_cast<png_byte>(palette_rgb[i] & 0xff);
  }
  png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(index.data() + static_cast<std::size_t>(y) * w));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> resize_bicubic(const Tensor<float>& in, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractViolation("resize to an empty image");
  const int H = in.h(), W = in.w();
  const Taps ty = make_taps(H, out_h);
  const Taps tx = make_taps(W, out_w);
  Tensor<float> out({in.n(), in.c(), out_h, out_w});
  std::vector<double> tmp(static_cast<std::size_t>(H) * out_w);
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      const float* src = in.plane(n, c);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < out_w; ++x) {
          double s = 0;
          const auto& w = tx.weights[x];
          const float* row = src + static_cast<std::size_t>(y) * W + tx.first[x];
          for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * row[k];
          tmp[static_cast<std::size_t>(y) * out_w + x] = s;
        }
      float* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const auto& w = ty.weights[y];
        for (int x = 0; x < out_w; ++x) {
          double s = 0;
          for (std::size_t k = 0; k < w.size(); ++k)
            s += w[k] * tmp[static_cast<std::size_t>(ty.first[y] + static_cast<int>(k)) * out_w + x];
          dst[static_cast<std::size_t>(y) * out_w + x] = static_cast<float>(s);
        }
      }
    }
  return out;
}

Tensor<float> degrade_bicubic(const Tensor<float>& hr, double r) {
  if (!(r >= 1.0)) throw InvalidScale("degradation scale must be >= 1");
  const int oh = static_cast<int>(std::lround(hr.h() / r));
  const int ow = static_cast<int>(std::lround(hr.w() / r));
  if (oh < 1 || ow < 1) throw InvalidScale("degradation scale collapses the image");
  if (oh == hr.h() && ow == hr.w()) return hr;
  Tensor<float> out = resize_bicubic(hr, oh, ow);
  for (float& v : out.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace saldrn
