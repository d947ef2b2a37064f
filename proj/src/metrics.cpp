// SPDX-License-Identifier: Apache-2.0

#include "datprl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace datprl {

namespace {

void check_pair(const Tensor &a, const Tensor &b, double peak) {
  if (a.shape() != b.shape())
    throw ShapeError("metric: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  if (!(peak > 0.0)) throw std::invalid_argument("metric: peak must be positive");
}

std::vector<double> window_1d(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double s = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - c;
    s += (g[i] = std::exp(-x * x / (2.0 * sigma * sigma)));
  }
  for (auto &v : g) v /= s;
  return g;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const double *img, std::size_t h, std::size_t w,
                                 const std::vector<double> &wy, const std::vector<double> &wx) {
  const std::size_t ho = h - wy.size() + 1, wo = w - wx.size() + 1;
  std::vector<double> tmp(h * wo), out(ho * wo);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < wx.size(); ++k) s += wx[k] * img[y * w + x + k];
      tmp[y * wo + x] = s;
    }
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < wy.size(); ++k) s += wy[k] * tmp[(y + k) * wo + x];
      out[y * wo + x] = s;
    }
  return out;
}

} // namespace

double psnr(const Tensor &a, const Tensor &b, double peak) {
  check_pair(a, b, peak);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse < 1e-10) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor &a, const Tensor &b, double peak) {
  check_pair(a, b, peak);
  if (a.rank() != 2 && a.rank() != 3) throw ShapeError("ssim: expected [h,w] or [c,h,w], got " + shape_str(a.shape()));
  const std::size_t c = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t h = a.shape()[a.rank() - 2], w = a.shape()[a.rank() - 1];
  const auto wy = window_1d(std::min<std::size_t>(11, h), 1.5);
  const auto wx = window_1d(std::min<std::size_t>(11, w), 1.5);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t plane = h * w;
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double *x = a.data().data() + ch * plane;
    const double *y = b.data().data() + ch * plane;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = filter_valid(x, h, w, wy, wx), my = filter_valid(y, h, w, wy, wx);
    auto sxx = filter_valid(xx.data(), h, w, wy, wx), syy = filter_valid(yy.data(), h, w, wy, wx);
    auto sxy = filter_valid(xy.data(), h, w, wy, wx);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * (mx[i] * my[i]) + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(c);
}

} // namespace datprl
