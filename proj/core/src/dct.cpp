#include "cvheat/dct.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace cvheat::heat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

const DctBasis& DctBasis::get(int n) {
  static std::map<int, DctBasis> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw std::invalid_argument("DctBasis: length must be >= 1");
  DctBasis basis;
  basis.n = n;
  basis.fwd = Tensor({n, n});
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      basis.fwd.at2(k, i) = (k == 0 ? s0 : sk) * std::cos(kPi * (2 * i + 1) * k / (2.0 * n));
  return cache.emplace(n, std::move(basis)).first->second;
}

namespace {

// y = B x B^T (transpose=false) or B^T x B (transpose=true) on one (H,W) grid.
Tensor transform2d(const Tensor& x, bool transpose) {
  const int h = x.shape[0], w = x.shape[1];
  const Tensor& dh = DctBasis::get(h).fwd;
  const Tensor& dw = DctBasis::get(w).fwd;
  Tensor tmp({h, w}), out({h, w});
  for (int i = 0; i < h; ++i)
    for (int p = 0; p < h; ++p) {
      const double d = transpose ? dh.at2(p, i) : dh.at2(i, p);
      if (d == 0.0) continue;
      for (int j = 0; j < w; ++j) tmp.at2(i, j) += d * x.at2(p, j);
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int p = 0; p < w; ++p) s += tmp.at2(i, p) * (transpose ? dw.at2(p, j) : dw.at2(j, p));
      out.at2(i, j) = s;
    }
  return out;
}

}  // namespace

Tensor dct2(const Tensor& x) {
  if (x.ndim() != 2) throw std::invalid_argument("dct2: rank-2 input required");
  return transform2d(x, false);
}

Tensor idct2(const Tensor& x) {
  if (x.ndim() != 2) throw std::invalid_argument("idct2: rank-2 input required");
  return transform2d(x, true);
}

}  // namespace cvheat::heat
