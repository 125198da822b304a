#pragma once

#include <string>

#include "fdivmin/mixture.hpp"
#include "fdivmin/rng.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

// A finite dataset: one row per point.
struct EmpiricalDataset {
  Tensor points;  // NxD

  explicit EmpiricalDataset(Tensor pts);

  std::size_t num_points() const { return points.rows(); }
  std::size_t dim() const { return points.cols(); }

  Tensor point(std::size_t n) const;

  static EmpiricalDataset sample_from(const GaussianMixture& mix,
                                      std::size_t n, Rng& rng);

  // CSV: one row per point, plain decimal floats.
  void save_csv(const std::string& path) const;
  static EmpiricalDataset load_csv(const std::string& path);

  // Raw little-endian float64 with an 8-byte header (N, D as u32 each).
  void save_binary(const std::string& path) const;
  static EmpiricalDataset load_binary(const std::string& path);
};

}  // namespace fdivmin
