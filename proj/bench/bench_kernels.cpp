// Serial reference vs OpenMP kernels: wall time per call, speedup, and a
// bitwise comparison of the outputs.
//
//   bench_kernels [--reps N] [--threads T]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <random>
#include <string>

#include "dpdag/kernels.hpp"

using dpdag::Tensor;
namespace k = dpdag::kernels;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return t;
}

double time_per_call(const std::function<void()>& f, int reps) {
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

struct Case {
  std::string name;
  std::function<void(Tensor&)> serial;
  std::function<void(Tensor&)> parallel;
};

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--reps") == 0) reps = std::atoi(argv[i + 1]);
    else if (std::strcmp(argv[i], "--threads") == 0) omp_set_num_threads(std::atoi(argv[i + 1]));
    else {
      std::fprintf(stderr, "usage: bench_kernels [--reps N] [--threads T]\n");
      return 2;
    }
  }
  if (reps < 1) {
    std::fprintf(stderr, "bench_kernels: --reps must be >= 1\n");
    return 2;
  }

  const Tensor a = random_tensor(256, 256, 1), b = random_tensor(256, 256, 2);
  const std::size_t groups = 20, hidden = 16, batch = 128;
  const Tensor x = random_tensor(batch, groups * groups, 3);
  const Tensor w1 = random_tensor(groups, groups * hidden, 4);
  const Tensor gy = random_tensor(batch, groups * hidden, 5);
  const Tensor logits = random_tensor(400, 400, 6);
  const Tensor points = random_tensor(1000, 3, 7);

  const Case cases[] = {
      {"matmul 256x256x256", [&](Tensor& o) { o = Tensor(256, 256); k::serial::matmul(a, b, o); },
       [&](Tensor& o) { o = Tensor(256, 256); k::parallel::matmul(a, b, o); }},
      {"grouped_matmul 128x(20*20)->(20*16)",
       [&](Tensor& o) { o = Tensor(batch, groups * hidden); k::serial::grouped_matmul(x, w1, groups, o); },
       [&](Tensor& o) { o = Tensor(batch, groups * hidden); k::parallel::grouped_matmul(x, w1, groups, o); }},
      {"grouped_matmul_grad_input",
       [&](Tensor& o) { o = Tensor(batch, groups * groups); k::serial::grouped_matmul_grad_input(gy, w1, groups, o); },
       [&](Tensor& o) { o = Tensor(batch, groups * groups); k::parallel::grouped_matmul_grad_input(gy, w1, groups, o); }},
      {"grouped_matmul_grad_weight",
       [&](Tensor& o) { o = Tensor(groups, groups * hidden); k::serial::grouped_matmul_grad_weight(x, gy, groups, o); },
       [&](Tensor& o) { o = Tensor(groups, groups * hidden); k::parallel::grouped_matmul_grad_weight(x, gy, groups, o); }},
      {"log_normalize_rows 400x400", [&](Tensor& o) { o = logits; k::serial::log_normalize_rows(o); },
       [&](Tensor& o) { o = logits; k::parallel::log_normalize_rows(o); }},
      {"log_normalize_cols 400x400", [&](Tensor& o) { o = logits; k::serial::log_normalize_cols(o); },
       [&](Tensor& o) { o = logits; k::parallel::log_normalize_cols(o); }},
      {"rbf_gram 1000x3", [&](Tensor& o) { o = Tensor(1000, 1000); k::serial::rbf_gram(points, 1.0, o); },
       [&](Tensor& o) { o = Tensor(1000, 1000); k::parallel::rbf_gram(points, 1.0, o); }},
  };

  std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
  std::printf("%-38s %14s %14s %8s %10s\n", "kernel", "serial_s", "parallel_s", "speedup", "identical");
  bool all_identical = true;
  for (const Case& c : cases) {
    Tensor os, op;
    const double ts = time_per_call([&] { c.serial(os); }, reps);
    const double tp = time_per_call([&] { c.parallel(op); }, reps);
    const bool same = os == op;
    all_identical = all_identical && same;
    std::printf("%-38s %14.6e %14.6e %8.2f %10s\n", c.name.c_str(), ts, tp, ts / tp, same ? "yes" : "NO");
  }
  return all_identical ? 0 : 1;
}
