#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "dpdag/kernels.hpp"

namespace dpdag::kernels::parallel {

namespace {
using index_t = std::int64_t;

double log_sum_exp(const double* v, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}
}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const index_t m = static_cast<index_t>(a.rows());
  const std::size_t k = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < m; ++i) {
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
  const index_t cells = static_cast<index_t>(groups * batch);
#pragma omp parallel for schedule(static)
  for (index_t cell = 0; cell < cells; ++cell) {
    const std::size_t g = cell / batch, r = cell % batch;
    const double* wg = w.ptr() + g * in * outw;
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

void grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups, Tensor& gx) {
  const std::size_t batch = gy.rows();
  const std::size_t outw = gy.cols() / groups;
  const std::size_t in = gx.cols() / groups;
  const index_t cells = static_cast<index_t>(groups * batch);
#pragma omp parallel for schedule(static)
  for (index_t cell = 0; cell < cells; ++cell) {
    const std::size_t g = cell / batch, r = cell % batch;
    const double* wg = w.ptr() + g * in * outw;
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

void grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups, Tensor& gw) {
  const std::size_t batch = x.rows();
  const std::size_t in = x.cols() / groups;
  const std::size_t outw = gy.cols() / groups;
  // One group per iteration: the batch reduction stays in serial order.
#pragma omp parallel for schedule(static)
  for (index_t gi = 0; gi < static_cast<index_t>(groups); ++gi) {
    const std::size_t g = gi;
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

void log_normalize_rows(Tensor& m) {
  const std::size_t n = m.cols();
#pragma omp parallel for schedule(static)
  for (index_t r = 0; r < static_cast<index_t>(m.rows()); ++r) {
    double* row = m.ptr() + r * n;
    const double lse = log_sum_exp(row, n, 1);
    for (std::size_t c = 0; c < n; ++c) row[c] -= lse;
  }
}

void log_normalize_cols(Tensor& m) {
  const std::size_t n = m.cols();
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < static_cast<index_t>(n); ++c) {
    double* col = m.ptr() + c;
    const double lse = log_sum_exp(col, m.rows(), n);
    for (std::size_t r = 0; r < m.rows(); ++r) col[r * n] -= lse;
  }
}

void rbf_gram(const Tensor& points, double bandwidth, Tensor& out) {
  const std::size_t n = points.rows(), d = points.cols();
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < static_cast<index_t>(n); ++i) {
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

}  // namespace dpdag::kernels::parallel
