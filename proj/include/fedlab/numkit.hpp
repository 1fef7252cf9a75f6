#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fedlab/errors.hpp"

namespace fedlab {

// Flat 64-bit parameter vector. Holds the global model, local models, drift
// memories and their deltas; every algorithm speaks this currency.
using ParamVector = std::vector<double>;

// Dense row-major matrix of doubles.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
};

void require_same_length(const ParamVector& x, const ParamVector& y);

// result[k] = a * x[k] + y[k]
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);

// y[k] += a * x[k]
void axpy_inplace(double a, const ParamVector& x, ParamVector& y);

double dot(const ParamVector& x, const ParamVector& y);
double norm_sq(const ParamVector& x);
void scale_inplace(ParamVector& x, double a);
bool all_finite(const ParamVector& x);

// Counter-based random stream. The output sequence is a pure function of
// (master_seed, stream_id, counter), so any stream can be replayed from
// counter = 0 and client streams can be consumed in parallel without
// draw-order coupling.
struct RngStream {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  std::uint64_t next_u64();
  double next_double();       // uniform [0, 1)
  double next_double_open();  // uniform (0, 1]
  double next_normal();       // standard normal (Box-Muller, two draws)
  double next_gamma(double shape);  // shape > 0, unit scale
  std::uint64_t next_below(std::uint64_t n);  // uniform on [0, n), unbiased
};

// Derives an independent substream keyed by a purpose label and an index.
// Distinct (purpose, index) pairs map to distinct stream ids.
RngStream derive_stream(std::uint64_t master_seed, std::string_view purpose,
                        std::uint64_t index);

// SplitMix64 finalizer; full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over bytes, used for stream labels and config digests.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace fedlab
