#pragma once

#include <array>
#include <vector>

#include "dmn/geometry.hpp"

namespace dmn {

struct EmptyMask : Error {
  using Error::Error;
};

// CDF-remap histogram equalization over 256 bins; output in [0, 1].
ProjImage hist_equalize(const ProjImage& image);

// Mutual information (nats) between masked pixels of a and b, from a
// 64x64 joint histogram. mask pixels > 0.5 select the ROI.
double mutual_information(const ProjImage& a, const ProjImage& b,
                          const ProjImage& mask);

// Closed boundary polylines of a binary image, traced along pixel-corner
// cracks (4-connectivity). Each contour is a closed chain of (x, y) corner
// coordinates; the region interior lies to the left of the traversal.
using Contour = std::vector<std::array<double, 2>>;
std::vector<Contour> silhouette_contour(const ProjImage& mask2d);

// Count of region pixels having at least one 4-neighbor outside the region.
int boundary_pixel_count(const ProjImage& mask2d);

// Separable Gaussian blur, sigma in pixels (sigma <= 0 returns a copy).
ProjImage gaussian_blur(const ProjImage& image, double sigma);

// Burn contours into a copy of the image at max intensity.
ProjImage burn_contours(const ProjImage& image,
                        const std::vector<Contour>& contours);

}  // namespace dmn
