#include "fdivmin/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "fdivmin/errors.hpp"

namespace fdivmin {

EmpiricalDataset::EmpiricalDataset(Tensor pts) : points(std::move(pts)) {
  if (points.rank() != 2 || points.rows() < 1)
    throw ContractViolation("EmpiricalDataset: need an NxD tensor, N >= 1");
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!std::isfinite(points[i]))
      throw ContractViolation("EmpiricalDataset: non-finite point");
}

Tensor EmpiricalDataset::point(std::size_t n) const {
  Tensor x = Tensor::zeros({dim()});
  for (std::size_t d = 0; d < dim(); ++d) x[d] = points(n, d);
  return x;
}

EmpiricalDataset EmpiricalDataset::sample_from(const GaussianMixture& mix,
                                               std::size_t n, Rng& rng) {
  Tensor pts = Tensor::zeros({n, mix.dim()});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x = mix.sample(rng);
    for (std::size_t d = 0; d < mix.dim(); ++d) pts(i, d) = x[d];
  }
  return EmpiricalDataset(std::move(pts));
}

void EmpiricalDataset::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ContractViolation("save_csv: cannot open " + path);
  f << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < num_points(); ++r) {
    for (std::size_t c = 0; c < dim(); ++c) {
      if (c) f << ",";
      f << points(r, c);
    }
    f << "\n";
  }
}

EmpiricalDataset EmpiricalDataset::load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("load_csv: cannot open " + path);
  std::vector<double> data;
  std::size_t cols = 0, rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      data.push_back(std::stod(cell));
      ++c;
    }
    if (rows == 0)
      cols = c;
    else if (c != cols)
      throw ContractViolation("load_csv: ragged rows in " + path);
    ++rows;
  }
  if (rows == 0) throw ContractViolation("load_csv: empty file " + path);
  return EmpiricalDataset(Tensor({rows, cols}, std::move(data)));
}

void EmpiricalDataset::save_binary(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContractViolation("save_binary: cannot open " + path);
  std::uint32_t n = static_cast<std::uint32_t>(num_points());
  std::uint32_t d = static_cast<std::uint32_t>(dim());
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(points.data()),
          static_cast<std::streamsize>(points.size() * sizeof(double)));
}

EmpiricalDataset EmpiricalDataset::load_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractViolation("load_binary: cannot open " + path);
  std::uint32_t n = 0, d = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  f.read(reinterpret_cast<char*>(&d), 4);
  if (!f || n == 0 || d == 0)
    throw ContractViolation("load_binary: bad header in " + path);
  Tensor pts = Tensor::zeros({n, d});
  f.read(reinterpret_cast<char*>(pts.data()),
         static_cast<std::streamsize>(pts.size() * sizeof(double)));
  if (!f) throw ContractViolation("load_binary: truncated file " + path);
  return EmpiricalDataset(std::move(pts));
}

}  // namespace fdivmin
