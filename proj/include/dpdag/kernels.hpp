#pragma once

// Dense numeric kernels behind the autodiff ops and the data generator.
//
// Every kernel exists twice: a plain serial loop kept as the reference and an
// OpenMP version. Both partition work by output element and accumulate in the
// same order, so their results are bitwise identical for any thread count.
// The dispatching functions in `dpdag::kernels` pick one per call.

#include <cstddef>

#include "dpdag/tensor.hpp"

namespace dpdag::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend b);
Backend backend();

/// Work (multiply-adds) below which the parallel backend still runs serially.
inline constexpr std::size_t kParallelGrain = 1 << 15;

namespace serial {
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
void grouped_matmul(const Tensor& x, const Tensor& w, std::size_t groups, Tensor& out);
void grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups, Tensor& gx);
void grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups, Tensor& gw);
void log_normalize_rows(Tensor& m);
void log_normalize_cols(Tensor& m);
void rbf_gram(const Tensor& points, double bandwidth, Tensor& out);
}  // namespace serial

namespace parallel {
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
void grouped_matmul(const Tensor& x, const Tensor& w, std::size_t groups, Tensor& out);
void grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups, Tensor& gx);
void grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups, Tensor& gw);
void log_normalize_rows(Tensor& m);
void log_normalize_cols(Tensor& m);
void rbf_gram(const Tensor& points, double bandwidth, Tensor& out);
}  // namespace parallel

// Dispatching entry points. Shapes are validated here, not in the backends.

/// out = a·b, (m×k)(k×n).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Block-diagonal product. x is B×(groups·in), w is groups×(in·out) with
/// group g's in×out weight stored row-major in row g. Result is B×(groups·out).
Tensor grouped_matmul(const Tensor& x, const Tensor& w, std::size_t groups);
Tensor grouped_matmul_grad_input(const Tensor& gy, const Tensor& w, std::size_t groups);
Tensor grouped_matmul_grad_weight(const Tensor& x, const Tensor& gy, std::size_t groups);

/// In place: each row (column) minus its log-sum-exp.
void log_normalize_rows(Tensor& m);
void log_normalize_cols(Tensor& m);

/// K(i,j) = exp(-|p_i - p_j|^2 / (2 bandwidth^2)) for the rows of `points`.
Tensor rbf_gram(const Tensor& points, double bandwidth);

}  // namespace dpdag::kernels
