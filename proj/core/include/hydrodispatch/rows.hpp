#pragma once

#include <utility>
#include <vector>

namespace hydrodispatch {

// One linear constraint row: sum over terms of coeff * x[column], compared
// against rhs. Whether the row is an equality or an inequality is decided by
// the container holding it.
struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;

  void add(int column, double coeff) {
    if (coeff != 0.0) terms.emplace_back(column, coeff);
  }

  double evaluate(const std::vector<double>& x) const {
    double lhs = 0.0;
    for (const auto& [column, coeff] : terms) lhs += coeff * x[static_cast<std::size_t>(column)];
    return lhs;
  }
};

}  // namespace hydrodispatch
