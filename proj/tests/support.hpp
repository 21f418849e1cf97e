#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dpdag/autodiff.hpp"
#include "dpdag/tensor.hpp"

namespace testing {

inline dpdag::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                                   double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  dpdag::Tensor t(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline double max_abs_diff(const dpdag::Tensor& a, const dpdag::Tensor& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

/// Norm-wise relative error |a - b| / max(|a|, |b|, floor).
inline double relative_error(const dpdag::Tensor& a, const dpdag::Tensor& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Builds the scalar loss on a fresh tape from the current parameter values.
using LossFn = std::function<dpdag::ad::Var(dpdag::ad::Tape&)>;

/// Analytic gradient of every parameter vs central differences; returns the
/// worst norm-wise relative error.
inline double gradcheck(const LossFn& loss, const std::vector<dpdag::Parameter*>& params, double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    dpdag::ad::Tape tape;
    tape.backward(loss(tape));
  }
  double worst = 0.0;
  for (auto* p : params) {
    dpdag::Tensor numeric(p->value.rows(), p->value.cols());
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double keep = p->value[k];
      p->value[k] = keep + h;
      dpdag::ad::Tape t1;
      const double up = loss(t1).value().item();
      p->value[k] = keep - h;
      dpdag::ad::Tape t2;
      const double down = loss(t2).value().item();
      p->value[k] = keep;
      numeric[k] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(p->grad, numeric));
  }
  return worst;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("dpdag_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
