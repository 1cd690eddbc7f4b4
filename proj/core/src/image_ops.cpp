#include "dmn/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dmn {

ProjImage hist_equalize(const ProjImage& image) {
  ProjImage out = image;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double p : image.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (!(hi > lo)) return out;  // constant image

  constexpr int kBins = 256;
  std::array<std::size_t, kBins> hist{};
  const double scale = kBins / (hi - lo);
  auto bin_of = [&](double p) {
    int b = static_cast<int>((p - lo) * scale);
    return std::min(b, kBins - 1);
  };
  for (double p : image.pixels) hist[bin_of(p)] += 1;

  std::array<double, kBins> cdf{};
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(image.pixels.size());
  for (int b = 0; b < kBins; ++b) {
    acc += hist[b] * inv_n;
    cdf[b] = acc;
  }
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = cdf[bin_of(image.pixels[i])];
  return out;
}

double mutual_information(const ProjImage& a, const ProjImage& b,
                          const ProjImage& mask) {
  if (a.width != b.width || a.height != b.height || a.width != mask.width ||
      a.height != mask.height)
    throw ShapeMismatch("mutual_information: image/mask dimensions differ");

  std::vector<std::size_t> roi;
  for (std::size_t i = 0; i < mask.pixels.size(); ++i)
    if (mask.pixels[i] > 0.5) roi.push_back(i);
  if (roi.empty()) throw EmptyMask("mutual_information: empty mask");

  constexpr int kBins = 64;
  auto range_of = [&](const ProjImage& img, double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t i : roi) {
      lo = std::min(lo, img.pixels[i]);
      hi = std::max(hi, img.pixels[i]);
    }
    if (!(hi > lo)) hi = lo + 1.0;  // degenerate channel -> single bin
  };
  double alo, ahi, blo, bhi;
  range_of(a, alo, ahi);
  range_of(b, blo, bhi);
  const double ascale = kBins / (ahi - alo), bscale = kBins / (bhi - blo);
  auto bin_of = [](double p, double lo, double scale) {
    return std::min(static_cast<int>((p - lo) * scale), kBins - 1);
  };

  std::vector<double> joint(kBins * kBins, 0.0);
  std::array<double, kBins> pa{}, pb{};
  const double w = 1.0 / static_cast<double>(roi.size());
  for (std::size_t i : roi) {
    const int ba = bin_of(a.pixels[i], alo, ascale);
    const int bb = bin_of(b.pixels[i], blo, bscale);
    joint[ba * kBins + bb] += w;
    pa[ba] += w;
    pb[bb] += w;
  }

  double mi = 0.0;
  for (int i = 0; i < kBins; ++i)
    for (int j = 0; j < kBins; ++j) {
      const double pxy = joint[i * kBins + j];
      if (pxy > 0.0) mi += pxy * std::log(pxy / (pa[i] * pb[j]));
    }
  return mi;
}

namespace {

inline bool inside(const ProjImage& m, int x, int y) {
  if (x < 0 || y < 0 || x >= m.width || y >= m.height) return false;
  return m.at(x, y) > 0.5;
}

}  // namespace

int boundary_pixel_count(const ProjImage& mask2d) {
  int count = 0;
  for (int y = 0; y < mask2d.height; ++y)
    for (int x = 0; x < mask2d.width; ++x) {
      if (!inside(mask2d, x, y)) continue;
      if (!inside(mask2d, x - 1, y) || !inside(mask2d, x + 1, y) ||
          !inside(mask2d, x, y - 1) || !inside(mask2d, x, y + 1))
        ++count;
    }
  return count;
}

std::vector<Contour> silhouette_contour(const ProjImage& mask2d) {
  // Directed crack edges with the region on the left; chained into loops.
  using Corner = std::pair<int, int>;
  std::map<Corner, std::vector<Corner>> out_edges;
  auto add_edge = [&](int x0, int y0, int x1, int y1) {
    out_edges[{x0, y0}].push_back({x1, y1});
  };
  for (int y = 0; y < mask2d.height; ++y)
    for (int x = 0; x < mask2d.width; ++x) {
      if (!inside(mask2d, x, y)) continue;
      if (!inside(mask2d, x, y - 1)) add_edge(x, y, x + 1, y);          // bottom
      if (!inside(mask2d, x + 1, y)) add_edge(x + 1, y, x + 1, y + 1);  // right
      if (!inside(mask2d, x, y + 1)) add_edge(x + 1, y + 1, x, y + 1);  // top
      if (!inside(mask2d, x - 1, y)) add_edge(x, y + 1, x, y);          // left
    }

  std::vector<Contour> contours;
  while (!out_edges.empty()) {
    auto it = out_edges.begin();
    const Corner start = it->first;
    Corner cur = start;
    Contour loop;
    do {
      loop.push_back({static_cast<double>(cur.first),
                      static_cast<double>(cur.second)});
      auto oe = out_edges.find(cur);
      if (oe == out_edges.end() || oe->second.empty())
        throw Error("silhouette_contour: open boundary chain");
      const Corner next = oe->second.back();
      oe->second.pop_back();
      if (oe->second.empty()) out_edges.erase(oe);
      cur = next;
    } while (cur != start);
    contours.push_back(std::move(loop));
  }
  return contours;
}

ProjImage gaussian_blur(const ProjImage& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= ksum;

  ProjImage tmp = image, out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, image.width - 1);
        acc += kernel[i + radius] * image.at(xx, y);
      }
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, image.height - 1);
        acc += kernel[i + radius] * tmp.at(x, yy);
      }
      out.at(x, y) = acc;
    }
  return out;
}

ProjImage burn_contours(const ProjImage& image,
                        const std::vector<Contour>& contours) {
  ProjImage out = image;
  double hi = 0.0;
  for (double p : image.pixels) hi = std::max(hi, p);
  if (hi <= 0.0) hi = 1.0;
  auto burn = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < out.width && y < out.height) out.at(x, y) = hi;
  };
  for (const auto& c : contours) {
    for (std::size_t i = 0; i + 1 < c.size() + 1; ++i) {
      const auto& p0 = c[i];
      const auto& p1 = c[(i + 1) % c.size()];
      // Unit-length axis-aligned segments: burn the pixel to the left.
      const int dx = static_cast<int>(p1[0] - p0[0]);
      const int dy = static_cast<int>(p1[1] - p0[1]);
      const int x = static_cast<int>(std::min(p0[0], p1[0]));
      const int y = static_cast<int>(std::min(p0[1], p1[1]));
      if (dx == 1) burn(x, y);            // bottom edge, region above
      else if (dx == -1) burn(x, y - 1);  // top edge, region below
      else if (dy == 1) burn(x - 1, y);   // right edge, region left
      else if (dy == -1) burn(x, y);      // left edge, region right
    }
  }
  return out;
}

}  // namespace dmn
