#include "dpdag/kernels.hpp"

#include <omp.h>

#include <atomic>

#include "dpdag/errors.hpp"

namespace dpdag::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};

bool go_parallel(std::size_t work) {
  return g_backend.load(std::memory_order_relaxed) == Backend::Parallel && work >= kParallelGrain &&
         !omp_in_parallel() && omp_get_max_threads() > 1;
}

void check_groups(const char* op, std::size_t cols, std::size_t groups) {
  if (groups == 0 || cols % groups != 0) {
    throw DimensionError(std::string(op) + ": width " + std::to_string(cols) +
                         " not divisible into " + std::to_string(groups) + " groups");
  }
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a) + " x " + shape_string(b));
  }
  Tensor out(a.rows(), b.cols());
  if (go_parallel(a.rows() * a.cols() * b.cols())) {
    parallel::matmul(a, b, out);
  } else {
    serial::matmul(a, b, out);
  }
  return out;
}

Tensor grouped_matmul(const Tensor& x, const Tensor& w, std::size_t groups) {
  check_groups("grouped_matmul", x.cols(), groups);
  const std::size_t in = x.cols() / groups;
  if (w.rows() != groups || in == 0 || w.cols() % in != 0) {
    throw DimensionError("grouped_matmul: input " + shape_string(x) + " weight " + shape_string(w));
  }
  const std::size_t outw = w.cols() / in;
  Tensor out(x.rows(), groups * outw);
  if (go_parallel(x.rows() * x.cols() * outw)) {
    parallel::grouped_matmul(x, w, groups, out);
  } else {
    serial::grouped_matmul(x, w, groups, out);
  }
  return out;
}

Tensor grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups) {
  check_groups("grouped_matmul_grad_input", gy.cols(), groups);
  const std::size_t outw = gy.cols() / groups;
  if (w.rows() != groups || outw == 0 || w.cols() % outw != 0) {
    throw DimensionError("grouped_matmul_grad_input: " + shape_string(gy) + " " + shape_string(w));
  }
  Tensor gx(gy.rows(), groups * (w.cols() / outw));
  if (go_parallel(gy.rows() * w.size())) {
    parallel::grouped_matmul_grad_input(gy, w, groups, gx);
  } else {
    serial::grouped_matmul_grad_input(gy, w, groups, gx);
  }
  return gx;
}

Tensor grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups) {
  check_groups("grouped_matmul_grad_weight", x.cols(), groups);
  check_groups("grouped_matmul_grad_weight", gy.cols(), groups);
  if (x.rows() != gy.rows()) {
    throw DimensionError("grouped_matmul_grad_weight: " + shape_string(x) + " " + shape_string(gy));
  }
  const std::size_t in = x.cols() / groups, outw = gy.cols() / groups;
  Tensor gw(groups, in * outw);
  if (go_parallel(x.rows() * groups * in * outw)) {
    parallel::grouped_matmul_grad_weight(x, gy, groups, gw);
  } else {
    serial::grouped_matmul_grad_weight(x, gy, groups, gw);
  }
  return gw;
}

void log_normalize_rows(Tensor& m) {
  if (go_parallel(m.size() * 8)) {
    parallel::log_normalize_rows(m);
  } else {
    serial::log_normalize_rows(m);
  }
}

void log_normalize_cols(Tensor& m) {
  if (go_parallel(m.size() * 8)) {
    parallel::log_normalize_cols(m);
  } else {
    serial::log_normalize_cols(m);
  }
}

Tensor rbf_gram(const Tensor& points, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ParameterError("rbf_gram: bandwidth must be positive");
  Tensor out(points.rows(), points.rows());
  if (go_parallel(points.rows() * points.rows() * (points.cols() + 1))) {
    parallel::rbf_gram(points, bandwidth, out);
  } else {
    serial::rbf_gram(points, bandwidth, out);
  }
  return out;
}

}  // namespace dpdag::kernels
