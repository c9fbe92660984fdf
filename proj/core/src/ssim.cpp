#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gsurf/losses.hpp"

namespace gsurf {
namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& window() {
  static const std::array<double, kWin> w = [] {
    std::array<double, kWin> g{};
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - kHalf;
      g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}

using Plane = std::vector<double>;

// Same-size separable convolution; out-of-image taps read zero. The kernel is
// symmetric, so the blur is its own adjoint.
void blur(const Plane& in, int h, int w, Plane& tmp, Plane& out) {
  const auto& g = window();
  tmp.assign(in.size(), 0.0);
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      int lo = std::max(-kHalf, -x), hi = std::min(kHalf, w - 1 - x);
      for (int k = lo; k <= hi; ++k) acc += g[k + kHalf] * in[y * w + x + k];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      int lo = std::max(-kHalf, -y), hi = std::min(kHalf, h - 1 - y);
      for (int k = lo; k <= hi; ++k) acc += g[k + kHalf] * tmp[(y + k) * w + x];
      out[y * w + x] = acc;
    }
  }
}

}  // namespace

double ssim_mean(const Image& x, const Image& y, Image* grad_x) {
  if (!x.same_shape(y)) throw std::invalid_argument("ssim: shape mismatch");
  const int h = x.height, w = x.width, c = x.channels;
  const int n = h * w;
  if (grad_x) {
    grad_x->height = h;
    grad_x->width = w;
    grad_x->channels = c;
    grad_x->v.assign(static_cast<size_t>(n) * c, 0.0);
  }

  Plane px(n), py(n), pxx(n), pyy(n), pxy(n);
  Plane mx, my, mxx, myy, mxy, tmp;
  Plane gmu(n), gsxx(n), gsxy(n), b1(n), b2(n), b3(n);
  double total = 0;
  const double upstream = 1.0 / (static_cast<double>(n) * c);

  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < n; ++i) {
      double a = x.v[static_cast<size_t>(i) * c + ch];
      double b = y.v[static_cast<size_t>(i) * c + ch];
      px[i] = a;
      py[i] = b;
      pxx[i] = a * a;
      pyy[i] = b * b;
      pxy[i] = a * b;
    }
    blur(px, h, w, tmp, mx);
    blur(py, h, w, tmp, my);
    blur(pxx, h, w, tmp, mxx);
    blur(pyy, h, w, tmp, myy);
    blur(pxy, h, w, tmp, mxy);

    for (int i = 0; i < n; ++i) {
      double ux = mx[i], uy = my[i];
      double sxx = mxx[i] - ux * ux;
      double syy = myy[i] - uy * uy;
      double sxy = mxy[i] - ux * uy;
      double a1 = 2 * ux * uy + kC1, a2 = 2 * sxy + kC2;
      double d1 = ux * ux + uy * uy + kC1, d2 = sxx + syy + kC2;
      double s = (a1 * a2) / (d1 * d2);
      total += s;
      if (grad_x) {
        // d s / d mu_x folds the mean-dependence of the second moments in.
        double inv = 1.0 / (d1 * d2);
        gmu[i] = upstream * (2 * uy * a2 * inv - 2 * ux * s / d1 -
                             2 * uy * a1 * inv + 2 * ux * s / d2);
        gsxx[i] = upstream * (-s / d2);
        gsxy[i] = upstream * (2 * a1 * inv);
      }
    }
    if (grad_x) {
      blur(gmu, h, w, tmp, b1);
      blur(gsxx, h, w, tmp, b2);
      blur(gsxy, h, w, tmp, b3);
      for (int i = 0; i < n; ++i) {
        grad_x->v[static_cast<size_t>(i) * c + ch] =
            b1[i] + 2 * px[i] * b2[i] + py[i] * b3[i];
      }
    }
  }
  return total * upstream;
}

}  // namespace gsurf
