#include "dposelets/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dposelets::imaging {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error(Errc::InvalidConfig, "bad image geometry");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw Error(Errc::InvalidConfig, "bad image geometry");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(Errc::ShapeMismatch, "image data length does not match its dimensions");
  }
}

Image Image::to_gray() const {
  if (channels_ == 1) return *this;
  Image out(width_, height_, 1);
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = &data_[3 * i];
    out.data_[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

Image Image::to_rgb() const {
  if (channels_ == 3) return *this;
  Image out(width_, height_, 3);
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  for (std::size_t i = 0; i < n; ++i) {
    out.data_[3 * i] = out.data_[3 * i + 1] = out.data_[3 * i + 2] = data_[i];
  }
  return out;
}

Image Image::with_channels(int channels) const {
  return channels == 1 ? to_gray() : to_rgb();
}

Image Image::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
    throw Error(Errc::ShapeMismatch, "crop outside image");
  }
  Image out(w, h, channels_);
  for (int y = 0; y < h; ++y) {
    const float* src = &data_[(static_cast<std::size_t>(y0 + y) * width_ + x0) * channels_];
    std::copy(src, src + static_cast<std::size_t>(w) * channels_,
              &out.data_[static_cast<std::size_t>(y) * w * channels_]);
  }
  return out;
}

Point SimilarityTransform::apply(Point p) const {
  const double c = std::cos(rotation), s = std::sin(rotation);
  return {scale * (c * p.x - s * p.y) + tx, scale * (s * p.x + c * p.y) + ty};
}

SimilarityTransform SimilarityTransform::inverse() const {
  if (!valid()) throw Error(Errc::InvalidTransform, "scale must be positive and finite");
  // p = R^-1 (q - t) / s
  const double c = std::cos(-rotation), s = std::sin(-rotation);
  const double inv = 1.0 / scale;
  return {inv, -rotation, -inv * (c * tx - s * ty), -inv * (s * tx + c * ty)};
}

bool SimilarityTransform::valid() const {
  return scale > 0 && std::isfinite(scale) && std::isfinite(rotation) && std::isfinite(tx) &&
         std::isfinite(ty);
}

SimilarityTransform SimilarityTransform::window_to_patch(const Box& window, int patch_side) {
  if (!(window.w > 0)) throw Error(Errc::InvalidTransform, "window side must be positive");
  const double s = patch_side / window.w;
  return {s, 0.0, -s * window.x, -s * window.y};
}

SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner) {
  const Point t = outer.apply({inner.tx, inner.ty});
  return {outer.scale * inner.scale, outer.rotation + inner.rotation, t.x, t.y};
}

namespace {

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  throw Error(Errc::CorruptData, path.string() + ": " + why);
}

Image load_pnm(const std::filesystem::path& path, std::istream& in, int channels) {
  auto next_token = [&]() -> std::string {
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
  };
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    corrupt(path, "malformed header");
  }
  if (w <= 0 || h <= 0) corrupt(path, "non-positive dimensions");
  if (maxval != 255) throw Error(Errc::UnsupportedFormat, path.string() + ": maxval must be 255");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) corrupt(path, "truncated pixel data");
  std::vector<float> data(bytes.size());
  std::transform(bytes.begin(), bytes.end(), data.begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  return Image(w, h, channels, std::move(data));
}

Image load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    corrupt(path, png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = color ? 3 : 1;
  png.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const int stored = channels + 1;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    corrupt(path, msg);
  }
  const int w = static_cast<int>(png.width), h = static_cast<int>(png.height);
  std::vector<float> data(static_cast<std::size_t>(w) * h * channels);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    for (int c = 0; c < channels; ++c) {
      data[i * channels + c] = static_cast<float>(buf[i * stored + c]) / 255.0f;
    }
  }
  return Image(w, h, channels, std::move(data));
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), 8);
  const auto got = in.gcount();
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && std::equal(magic, magic + 8, png_sig)) {
    in.close();
    return load_png(path);
  }
  if (got >= 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) {
    in.clear();
    in.seekg(2);
    return load_pnm(path, in, magic[1] == '5' ? 1 : 3);
  }
  throw Error(Errc::UnsupportedFormat, path.string());
}

void save_pnm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::FileNotFound, "cannot write " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << "\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image resize(const Image& img, int out_width, int out_height, double scale_x, double scale_y) {
  Image out(out_width, out_height, img.channels());
  const int w = img.width(), h = img.height(), nc = img.channels();
  std::vector<int> x0(out_width), x1(out_width);
  std::vector<float> fx(out_width);
  for (int x = 0; x < out_width; ++x) {
    const double sx = std::clamp((x + 0.5) / scale_x - 0.5, 0.0, static_cast<double>(w - 1));
    x0[x] = static_cast<int>(std::floor(sx));
    x1[x] = std::min(x0[x] + 1, w - 1);
    fx[x] = static_cast<float>(sx - x0[x]);
  }
  for (int y = 0; y < out_height; ++y) {
    const double sy = std::clamp((y + 0.5) / scale_y - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const float fy = static_cast<float>(sy - y0);
    for (int x = 0; x < out_width; ++x) {
      for (int c = 0; c < nc; ++c) {
        const float top = img.at(x0[x], y0, c) + fx[x] * (img.at(x1[x], y0, c) - img.at(x0[x], y0, c));
        const float bot = img.at(x0[x], y1, c) + fx[x] * (img.at(x1[x], y1, c) - img.at(x0[x], y1, c));
        out.at(x, y, c) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

int pyramid_level_count(int min_dim, double ratio, int min_side) {
  int count = 0;
  while (static_cast<int>(std::floor(min_dim * std::pow(ratio, count))) >= min_side) ++count;
  return count;
}

ScalePyramid build_pyramid(const Image& img, double ratio, int min_side) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(Errc::InvalidRatio, "ratio must lie in (0,1)");
  if (min_side < kPatchSide) throw Error(Errc::InvalidConfig, "min_side must be at least 61");
  if (std::min(img.width(), img.height()) < min_side) {
    throw Error(Errc::ImageTooSmall, "image shorter side below min_side");
  }
  ScalePyramid pyr;
  pyr.ratio = ratio;
  const int count = pyramid_level_count(std::min(img.width(), img.height()), ratio, min_side);
  for (int k = 0; k < count; ++k) {
    if (k == 0) {
      pyr.levels.push_back({1.0, img});
      continue;
    }
    const double s = std::pow(ratio, k);
    const int lw = static_cast<int>(std::floor(img.width() * s));
    const int lh = static_cast<int>(std::floor(img.height() * s));
    pyr.levels.push_back({s, resize(img, lw, lh, s, s)});
  }
  return pyr;
}

Image warp_patch(const Image& img, const SimilarityTransform& t, int side) {
  if (!t.valid()) throw Error(Errc::InvalidTransform, "scale must be positive and finite");
  const SimilarityTransform inv = t.inverse();
  const int w = img.width(), h = img.height(), nc = img.channels();
  Image out(side, side, nc);
  const double c = std::cos(inv.rotation) * inv.scale, s = std::sin(inv.rotation) * inv.scale;
  auto sample = [&](int x, int y, int ch) -> float {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.5f;
    return img.at(x, y, ch);
  };
  for (int v = 0; v < side; ++v) {
    for (int u = 0; u < side; ++u) {
      const double px = u + 0.5, py = v + 0.5;
      const double sx = c * px - s * py + inv.tx - 0.5;
      const double sy = s * px + c * py + inv.ty - 0.5;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      if (fx0 < -2.0 || fy0 < -2.0 || fx0 > w + 1.0 || fy0 > h + 1.0) {
        for (int ch = 0; ch < nc; ++ch) out.at(u, v, ch) = 0.5f;
        continue;
      }
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const float fx = static_cast<float>(sx - fx0), fy = static_cast<float>(sy - fy0);
      for (int ch = 0; ch < nc; ++ch) {
        const float a = sample(x0, y0, ch), b = sample(x0 + 1, y0, ch);
        const float cc = sample(x0, y0 + 1, ch), d = sample(x0 + 1, y0 + 1, ch);
        const float top = (1.0f - fx) * a + fx * b;
        const float bot = (1.0f - fx) * cc + fx * d;
        out.at(u, v, ch) = (1.0f - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

void JitterConfig::validate() const {
  if (!(scale_low > 0 && scale_low <= scale_high) || !(max_translation_frac >= 0 && max_translation_frac < 0.5) ||
      !(max_rotation >= 0)) {
    throw Error(Errc::InvalidConfig, "invalid jitter configuration");
  }
}

JitterDraw jitter_sample(const Image& img, const SimilarityTransform& base, const JitterConfig& cfg,
                         std::uint64_t draw_index, int side) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.rng_seed), static_cast<std::uint32_t>(cfg.rng_seed >> 32),
                    static_cast<std::uint32_t>(draw_index), static_cast<std::uint32_t>(draw_index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> rot(-cfg.max_rotation, cfg.max_rotation);
  std::uniform_real_distribution<double> scl(cfg.scale_low, cfg.scale_high);
  std::uniform_real_distribution<double> tr(-cfg.max_translation_frac, cfg.max_translation_frac);
  JitterDraw d;
  d.rotation = cfg.max_rotation > 0 ? rot(rng) : 0.0;
  d.scale = cfg.scale_low < cfg.scale_high ? scl(rng) : cfg.scale_low;
  d.dx = cfg.max_translation_frac > 0 ? tr(rng) * side : 0.0;
  d.dy = cfg.max_translation_frac > 0 ? tr(rng) * side : 0.0;

  // Rotate and scale about the patch centre, then translate.
  const double ctr = 0.5 * side;
  SimilarityTransform j{d.scale, d.rotation, 0.0, 0.0};
  const Point rc = j.apply({ctr, ctr});
  j.tx = ctr - rc.x + d.dx;
  j.ty = ctr - rc.y + d.dy;
  d.transform = compose(j, base);
  d.patch = warp_patch(img, d.transform, side);
  return d;
}

}  // namespace dposelets::imaging
