#include <algorithm>
#include <cmath>
#include <limits>

#include "dpdag/kernels.hpp"

namespace dpdag::kernels::serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.ptr() + i * n;
    std::fill(orow, orow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* brow = b.ptr() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void grouped_matmul(const Tensor& x, const Tensor& w, std::size_t groups, Tensor& out) {
  const std::size_t batch = x.rows();
  const std::size_t in = x.cols() / groups;
  const std::size_t outw = out.cols() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    const double* wg = w.ptr() + g * in * outw;
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = x.ptr() + r * x.cols() + g * in;
      double* orow = out.ptr() + r * out.cols() + g * outw;
      std::fill(orow, orow + outw, 0.0);
      for (std::size_t p = 0; p < in; ++p) {
        const double xv = xr[p];
        const double* wrow = wg + p * outw;
        for (std::size_t j = 0; j < outw; ++j) orow[j] += xv * wrow[j];
      }
    }
  }
}

void grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups, Tensor& gx) {
  const std::size_t batch = gy.rows();
  const std::size_t outw = gy.cols() / groups;
  const std::size_t in = gx.cols() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    const double* wg = w.ptr() + g * in * outw;
    for (std::size_t r = 0; r < batch; ++r) {
      const double* gr = gy.ptr() + r * gy.cols() + g * outw;
      double* xr = gx.ptr() + r * gx.cols() + g * in;
      for (std::size_t p = 0; p < in; ++p) {
        const double* wrow = wg + p * outw;
        double acc = 0.0;
        for (std::size_t j = 0; j < outw; ++j) acc += gr[j] * wrow[j];
        xr[p] = acc;
      }
    }
  }
}

void grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups, Tensor& gw) {
  const std::size_t batch = x.rows();
  const std::size_t in = x.cols() / groups;
  const std::size_t outw = gy.cols() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    double* wg = gw.ptr() + g * in * outw;
    std::fill(wg, wg + in * outw, 0.0);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = x.ptr() + r * x.cols() + g * in;
      const double* gr = gy.ptr() + r * gy.cols() + g * outw;
      for (std::size_t p = 0; p < in; ++p) {
        const double xv = xr[p];
        double* wrow = wg + p * outw;
        for (std::size_t j = 0; j < outw; ++j) wrow[j] += xv * gr[j];
      }
    }
  }
}

namespace {
double log_sum_exp(const double* v, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}
}  // namespace

void log_normalize_rows(Tensor& m) {
  const std::size_t n = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.ptr() + r * n;
    const double lse = log_sum_exp(row, n, 1);
    for (std::size_t c = 0; c < n; ++c) row[c] -= lse;
  }
}

void log_normalize_cols(Tensor& m) {
  const std::size_t n = m.cols();
  for (std::size_t c = 0; c < n; ++c) {
    double* col = m.ptr() + c;
    const double lse = log_sum_exp(col, m.rows(), n);
    for (std::size_t r = 0; r < m.rows(); ++r) col[r * n] -= lse;
  }
}

void rbf_gram(const Tensor& points, double bandwidth, Tensor& out) {
  const std::size_t n = points.rows(), d = points.cols();
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points(i, k) - points(j, k);
        sq += diff * diff;
      }
      out(i, j) = std::exp(-sq * inv);
    }
  }
}

}  // namespace dpdag::kernels::serial
