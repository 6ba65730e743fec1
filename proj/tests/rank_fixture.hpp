// A 20-dataset, 4-method performance table (columns: ns-nmf, nmf, gnmf,
// snmf) whose tie-averaged ranks have column means 1.15, 3.125, 2.6, 3.125,
// i.e. 1.2, 3.1, 2.6, 3.1 at one decimal.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace fixture {

inline Eigen::MatrixXd twenty_dataset_performance() {
  struct Pattern {
    int rows;
    std::array<double, 4> perf;
  };
  // Larger is better.
  const std::array<Pattern, 5> patterns{{
      {2, {0.9, 0.1, 0.5, 0.1}},  // ranks 1, 3.5, 2, 3.5
      {3, {0.5, 0.1, 0.9, 0.1}},  // ranks 2, 3.5, 1, 3.5
      {5, {0.9, 0.5, 0.3, 0.0}},  // ranks 1, 2, 3, 4
      {5, {0.9, 0.0, 0.3, 0.5}},  // ranks 1, 4, 3, 2
      {5, {0.9, 0.2, 0.2, 0.2}},  // ranks 1, 3, 3, 3
  }};
  Eigen::MatrixXd out(20, 4);
  Eigen::Index r = 0;
  for (const auto& p : patterns)
    for (int i = 0; i < p.rows; ++i, ++r)
      for (Eigen::Index c = 0; c < 4; ++c) out(r, c) = p.perf[static_cast<std::size_t>(c)];
  return out;
}

inline std::vector<std::string> four_methods() { return {"ns-nmf", "nmf", "gnmf", "snmf"}; }

}  // namespace fixture
