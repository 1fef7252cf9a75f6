#include "fedlab/numkit.hpp"

#include <cmath>
#include <numbers>

namespace fedlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

void require_same_length(const ParamVector& x, const ParamVector& y) {
  if (x.size() != y.size()) {
    throw DimensionError("vector length mismatch: " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
  }
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_same_length(x, y);
  ParamVector out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = a * x[k] + y[k];
  return out;
}

void axpy_inplace(double a, const ParamVector& x, ParamVector& y) {
  require_same_length(x, y);
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

double dot(const ParamVector& x, const ParamVector& y) {
  require_same_length(x, y);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * y[k];
  return acc;
}

double norm_sq(const ParamVector& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

void scale_inplace(ParamVector& x, double a) {
  for (double& v : x) v *= a;
}

bool all_finite(const ParamVector& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view purpose,
                        std::uint64_t index) {
  const std::uint64_t id = mix64(fnv1a64(purpose) ^ mix64(index));
  return RngStream{master_seed, id, 0};
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(master_seed) ^ mix64(stream_id);
  ++counter;
  return mix64(key + counter * kGolden);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_double_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_normal() {
  const double u1 = next_double();  // [0, 1)
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::next_gamma(double shape) {
  if (!(shape > 0.0)) throw NumericError("gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and fold back with a uniform power.
    const double u = next_double_open();
    return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = next_double_open();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return d * v;
    }
  }
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw NumericError("next_below(0)");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

}  // namespace fedlab
