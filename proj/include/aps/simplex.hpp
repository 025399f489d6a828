#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "aps/error.hpp"

namespace aps::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A linear row  lower <= sum(coeff * x) <= upper. Equal bounds make an equality.
struct Row {
  std::vector<std::pair<int, double>> coeffs;
  double lower = -kInf;
  double upper = kInf;
};

/// minimize c'x  subject to row ranges and lower <= x <= upper.
struct Problem {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  int add_variable(double c, double lo, double hi);
  int add_row(std::vector<std::pair<int, double>> coeffs, double lo, double hi);
  int num_variables() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }
};

enum class Status { Optimal, Infeasible, Unbounded };
const char* to_string(Status s);

struct Options {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;        // smallest tableau entry accepted as a pivot
  double singular_tol = 1e-10;    // smallest LU pivot during refactorization
  int refactor_interval = 200;
  int degenerate_streak_for_bland = 50;
  long max_iterations = 1'000'000;
};

struct Solution {
  Status status = Status::Infeasible;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> row_activity;
  long iterations = 0;   // pivots plus bound flips, both phases
  long refactorizations = 0;
};

/// Basis became numerically singular even after recomputing it from the original data.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Bounded-variable primal simplex on a dense tableau. Phase 1 minimizes the sum of
/// artificials, phase 2 the objective. Dantzig pricing, falling back to Bland's
/// lowest-index rule during runs of degenerate pivots; remaining ties go to the lowest
/// index. Fully deterministic.
Solution solve(const Problem& problem, const Options& options = {});

}  // namespace aps::lp
