#include "aps/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aps::lp {

int Problem::add_variable(double c, double lo, double hi) {
  cost.push_back(c);
  lower.push_back(lo);
  upper.push_back(hi);
  return num_variables() - 1;
}

int Problem::add_row(std::vector<std::pair<int, double>> coeffs, double lo, double hi) {
  rows.push_back(Row{std::move(coeffs), lo, hi});
  return num_rows() - 1;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
  }
  return "?";
}

namespace {

// Column layout of the working problem, every row written as  a.x - s + sigma*art = 0:
//   [0, n)          structural variables
//   [n, n+m)        row logicals s_i with bounds [row.lower, row.upper]
//   [n+m, n+m+k)    artificials, one per row that starts infeasible
class Tableau {
 public:
  Tableau(const Problem& p, const Options& o) : opt_(o), n_(p.num_variables()), m_(p.num_rows()) {
    build_columns(p);
    initial_basis(p);
  }

  Solution run(const Problem& p) {
    Solution sol;
    if (num_artificials_ > 0) {
      std::vector<double> phase1(static_cast<std::size_t>(cols_), 0.0);
      for (int j = n_ + m_; j < cols_; ++j) phase1[static_cast<std::size_t>(j)] = 1.0;
      set_costs(phase1);
      const Status s1 = optimize();
      double infeasibility = 0.0;
      for (int j = n_ + m_; j < cols_; ++j) infeasibility += std::abs(x_[static_cast<std::size_t>(j)]);
      if (s1 != Status::Optimal || infeasibility > opt_.feasibility_tol * std::max(1.0, scale_)) {
        sol.status = Status::Infeasible;
        finish(p, sol);
        return sol;
      }
      for (int j = n_ + m_; j < cols_; ++j) {
        lo_[static_cast<std::size_t>(j)] = 0.0;
        up_[static_cast<std::size_t>(j)] = 0.0;
        if (pos_[static_cast<std::size_t>(j)] < 0) x_[static_cast<std::size_t>(j)] = 0.0;
      }
    }
    std::vector<double> phase2(static_cast<std::size_t>(cols_), 0.0);
    std::copy(p.cost.begin(), p.cost.end(), phase2.begin());
    set_costs(phase2);
    sol.status = optimize();
    finish(p, sol);
    return sol;
  }

 private:
  using Index = std::size_t;

  double& at(int i, int j) { return tab_[static_cast<Index>(i) * static_cast<Index>(cols_) + static_cast<Index>(j)]; }
  double at(int i, int j) const {
    return tab_[static_cast<Index>(i) * static_cast<Index>(cols_) + static_cast<Index>(j)];
  }

  void build_columns(const Problem& p) {
    if (static_cast<int>(p.lower.size()) != n_ || static_cast<int>(p.upper.size()) != n_) {
      throw Error("lp: bound vectors do not match variable count");
    }
    cols_sparse_.assign(static_cast<Index>(n_ + m_), {});
    for (int i = 0; i < m_; ++i) {
      for (auto [j, a] : p.rows[static_cast<Index>(i)].coeffs) {
        if (j < 0 || j >= n_) throw Error("lp: row " + std::to_string(i) + " references unknown variable");
        if (a == 0.0) continue;
        auto& col = cols_sparse_[static_cast<Index>(j)];
        if (!col.empty() && col.back().first == i) {
          col.back().second += a;
        } else {
          col.emplace_back(i, a);
        }
        scale_ = std::max(scale_, std::abs(a));
      }
      cols_sparse_[static_cast<Index>(n_ + i)].emplace_back(i, -1.0);
    }
    lo_.assign(p.lower.begin(), p.lower.end());
    up_.assign(p.upper.begin(), p.upper.end());
    for (int j = 0; j < n_; ++j) {
      if (lo_[static_cast<Index>(j)] > up_[static_cast<Index>(j)]) {
        throw Error("lp: variable " + std::to_string(j) + " has lower > upper");
      }
    }
    for (const auto& row : p.rows) {
      lo_.push_back(row.lower);
      up_.push_back(row.upper);
    }
  }

  void initial_basis(const Problem& p) {
    const auto nm = static_cast<Index>(n_ + m_);
    x_.assign(nm, 0.0);
    pos_.assign(nm, -1);
    for (int j = 0; j < n_; ++j) {
      const auto J = static_cast<Index>(j);
      x_[J] = std::isfinite(lo_[J]) ? lo_[J] : (std::isfinite(up_[J]) ? up_[J] : 0.0);
    }
    std::vector<double> activity(static_cast<Index>(m_), 0.0);
    for (int j = 0; j < n_; ++j) {
      for (auto [i, a] : cols_sparse_[static_cast<Index>(j)]) activity[static_cast<Index>(i)] += a * x_[static_cast<Index>(j)];
    }
    for (double rhs : activity) scale_ = std::max(scale_, std::abs(rhs));
    for (const auto& row : p.rows) {
      if (std::isfinite(row.lower)) scale_ = std::max(scale_, std::abs(row.lower));
      if (std::isfinite(row.upper)) scale_ = std::max(scale_, std::abs(row.upper));
    }

    basis_.assign(static_cast<Index>(m_), -1);
    std::vector<double> basic_coeff(static_cast<Index>(m_), 0.0);
    const double tol = opt_.feasibility_tol;
    for (int i = 0; i < m_; ++i) {
      const auto I = static_cast<Index>(i);
      const int s = n_ + i;
      const auto S = static_cast<Index>(s);
      const double r = activity[I];
      if (r >= lo_[S] - tol && r <= up_[S] + tol) {
        basis_[I] = s;
        basic_coeff[I] = -1.0;
        x_[S] = r;
        continue;
      }
      const double target = r < lo_[S] ? lo_[S] : up_[S];
      x_[S] = target;
      // Crash: a structural column that appears only in this row can absorb the residual.
      bool crashed = false;
      for (int j = 0; j < n_ && !crashed; ++j) {
        const auto J = static_cast<Index>(j);
        const auto& col = cols_sparse_[J];
        if (col.size() != 1 || col[0].first != i || pos_[J] >= 0) continue;
        const double candidate = x_[J] + (target - r) / col[0].second;
        if (candidate >= lo_[J] - tol && candidate <= up_[J] + tol) {
          basis_[I] = j;
          pos_[J] = i;
          basic_coeff[I] = col[0].second;
          x_[J] = std::clamp(candidate, lo_[J], up_[J]);
          crashed = true;
        }
      }
      if (crashed) continue;
      const double sigma = target - r > 0.0 ? 1.0 : -1.0;
      const int art = static_cast<int>(cols_sparse_.size());
      cols_sparse_.push_back({{i, sigma}});
      lo_.push_back(0.0);
      up_.push_back(kInf);
      x_.push_back(std::abs(target - r));
      pos_.push_back(-1);
      basis_[I] = art;
      basic_coeff[I] = sigma;
      ++num_artificials_;
    }
    cols_ = static_cast<int>(cols_sparse_.size());
    for (int i = 0; i < m_; ++i) pos_[static_cast<Index>(basis_[static_cast<Index>(i)])] = i;

    // B is diagonal here, so the tableau is A scaled row by row.
    tab_.assign(static_cast<Index>(m_) * static_cast<Index>(cols_), 0.0);
    for (int j = 0; j < cols_; ++j) {
      for (auto [i, a] : cols_sparse_[static_cast<Index>(j)]) at(i, j) = a / basic_coeff[static_cast<Index>(i)];
    }
  }

  void set_costs(std::vector<double> c) {
    cost_ = std::move(c);
    recompute_reduced_costs();
  }

  void recompute_reduced_costs() {
    d_ = cost_;
    for (int i = 0; i < m_; ++i) {
      const double cb = cost_[static_cast<Index>(basis_[static_cast<Index>(i)])];
      if (cb == 0.0) continue;
      const double* row = &tab_[static_cast<Index>(i) * static_cast<Index>(cols_)];
      for (int j = 0; j < cols_; ++j) d_[static_cast<Index>(j)] -= cb * row[j];
    }
    for (int i = 0; i < m_; ++i) d_[static_cast<Index>(basis_[static_cast<Index>(i)])] = 0.0;
  }

  bool at_lower(int j) const { return x_[static_cast<Index>(j)] <= lo_[static_cast<Index>(j)]; }
  bool at_upper(int j) const { return x_[static_cast<Index>(j)] >= up_[static_cast<Index>(j)]; }

  // Returns the entering column and its direction (+1 increase, -1 decrease), or -1.
  int price(int& direction) const {
    int best = -1;
    double best_score = 0.0;
    for (int j = 0; j < cols_; ++j) {
      const auto J = static_cast<Index>(j);
      if (pos_[J] >= 0 || lo_[J] == up_[J]) continue;
      const double dj = d_[J];
      int dir = 0;
      if (dj < -opt_.optimality_tol && !at_upper(j)) dir = 1;
      else if (dj > opt_.optimality_tol && !at_lower(j)) dir = -1;
      if (dir == 0) continue;
      if (bland_) {
        direction = dir;
        return j;
      }
      if (std::abs(dj) > best_score) {
        best_score = std::abs(dj);
        best = j;
        direction = dir;
      }
    }
    return best;
  }

  void refactor() {
    ++refactorizations_;
    const int m = m_;
    // Gauss-Jordan inverse of B with partial pivoting.
    std::vector<double> b(static_cast<Index>(m) * static_cast<Index>(m), 0.0);
    std::vector<double> inv(static_cast<Index>(m) * static_cast<Index>(m), 0.0);
    auto B = [&](int r, int c) -> double& { return b[static_cast<Index>(r) * static_cast<Index>(m) + static_cast<Index>(c)]; };
    auto V = [&](int r, int c) -> double& { return inv[static_cast<Index>(r) * static_cast<Index>(m) + static_cast<Index>(c)]; };
    for (int k = 0; k < m; ++k) {
      for (auto [i, a] : cols_sparse_[static_cast<Index>(basis_[static_cast<Index>(k)])]) B(i, k) = a;
      V(k, k) = 1.0;
    }
    for (int c = 0; c < m; ++c) {
      int piv = c;
      for (int r = c + 1; r < m; ++r) {
        if (std::abs(B(r, c)) > std::abs(B(piv, c))) piv = r;
      }
      if (std::abs(B(piv, c)) < opt_.singular_tol) {
        throw NumericalFailure("lp: basis is singular (pivot " + std::to_string(std::abs(B(piv, c))) +
                               " below tolerance) after refactorization");
      }
      if (piv != c) {
        for (int k = 0; k < m; ++k) {
          std::swap(B(piv, k), B(c, k));
          std::swap(V(piv, k), V(c, k));
        }
      }
      const double inv_p = 1.0 / B(c, c);
      for (int k = 0; k < m; ++k) {
        B(c, k) *= inv_p;
        V(c, k) *= inv_p;
      }
      for (int r = 0; r < m; ++r) {
        if (r == c) continue;
        const double f = B(r, c);
        if (f == 0.0) continue;
        for (int k = 0; k < m; ++k) {
          B(r, k) -= f * B(c, k);
          V(r, k) -= f * V(c, k);
        }
      }
    }
    // Row k of B^-1 A corresponds to basis position k.
    std::fill(tab_.begin(), tab_.end(), 0.0);
    for (int j = 0; j < cols_; ++j) {
      for (auto [i, a] : cols_sparse_[static_cast<Index>(j)]) {
        for (int k = 0; k < m; ++k) {
          const double v = V(k, i);
          if (v != 0.0) at(k, j) += v * a;
        }
      }
    }
    for (int k = 0; k < m; ++k) {
      for (int kk = 0; kk < m; ++kk) at(k, basis_[static_cast<Index>(kk)]) = k == kk ? 1.0 : 0.0;
    }
    // x_B = -sum over nonbasic j of column_j * x_j
    for (int k = 0; k < m; ++k) {
      double v = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (pos_[static_cast<Index>(j)] >= 0) continue;
        const double xj = x_[static_cast<Index>(j)];
        if (xj != 0.0) v -= at(k, j) * xj;
      }
      x_[static_cast<Index>(basis_[static_cast<Index>(k)])] = v;
    }
    recompute_reduced_costs();
    since_refactor_ = 0;
  }

  void pivot(int r, int q) {
    const double p = at(r, q);
    double* prow = &tab_[static_cast<Index>(r) * static_cast<Index>(cols_)];
    const double inv_p = 1.0 / p;
    nz_.clear();
    for (int j = 0; j < cols_; ++j) {
      if (prow[j] != 0.0) {
        prow[j] *= inv_p;
        if (std::abs(prow[j]) < 1e-14) prow[j] = 0.0;
        else nz_.push_back(j);
      }
    }
    prow[q] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[static_cast<Index>(i) * static_cast<Index>(cols_)];
      const double f = row[q];
      if (f == 0.0) continue;
      for (int j : nz_) row[j] -= f * prow[j];
      row[q] = 0.0;
    }
    const double fd = d_[static_cast<Index>(q)];
    if (fd != 0.0) {
      for (int j : nz_) d_[static_cast<Index>(j)] -= fd * prow[j];
    }
    d_[static_cast<Index>(q)] = 0.0;
    const int leaving = basis_[static_cast<Index>(r)];
    pos_[static_cast<Index>(leaving)] = -1;
    basis_[static_cast<Index>(r)] = q;
    pos_[static_cast<Index>(q)] = r;
    ++since_refactor_;
  }

  Status optimize() {
    int degenerate_streak = 0;
    bland_ = false;
    for (;;) {
      if (iterations_ >= opt_.max_iterations) throw NumericalFailure("lp: iteration limit reached");
      int dir = 0;
      const int q = price(dir);
      if (q < 0) {
        if (since_refactor_ > 0) {
          refactor();
          continue;
        }
        return Status::Optimal;
      }
      const auto Q = static_cast<Index>(q);

      // Ratio test. Basic i moves by -dir * T[i][q] per unit step.
      double theta = kInf;
      int leave = -1;
      double leave_piv = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double t = at(i, q);
        if (std::abs(t) <= opt_.pivot_tol) continue;
        const double delta = -dir * t;
        const auto B = static_cast<Index>(basis_[static_cast<Index>(i)]);
        double limit;
        if (delta < 0.0) {
          if (!std::isfinite(lo_[B])) continue;
          limit = (x_[B] - lo_[B]) / -delta;
        } else {
          if (!std::isfinite(up_[B])) continue;
          limit = (up_[B] - x_[B]) / delta;
        }
        limit = std::max(limit, 0.0);
        const double tie = 1e-12 * (1.0 + std::abs(theta));
        bool take = false;
        if (leave < 0 || limit < theta - tie) {
          take = true;
        } else if (limit <= theta + tie) {
          take = bland_ ? basis_[static_cast<Index>(i)] < basis_[static_cast<Index>(leave)]
                        : std::abs(t) > std::abs(leave_piv);
        }
        if (take) {
          theta = std::min(theta, limit);
          leave = i;
          leave_piv = t;
        }
      }
      const double span = up_[Q] - lo_[Q];
      const bool flip = std::isfinite(span) && (leave < 0 || span <= theta);
      if (leave < 0 && !flip) return Status::Unbounded;
      const double step = flip ? span : theta;

      if (step > 1e-12) {
        degenerate_streak = 0;
        bland_ = false;
      } else if (++degenerate_streak >= opt_.degenerate_streak_for_bland) {
        bland_ = true;
      }

      if (step != 0.0) {
        for (int i = 0; i < m_; ++i) {
          const double t = at(i, q);
          if (t != 0.0) x_[static_cast<Index>(basis_[static_cast<Index>(i)])] -= dir * step * t;
        }
      }
      ++iterations_;
      if (flip) {
        x_[Q] = dir > 0 ? up_[Q] : lo_[Q];
        continue;
      }
      x_[Q] += dir * step;
      const auto L = static_cast<Index>(basis_[static_cast<Index>(leave)]);
      const double moved = -dir * leave_piv;
      x_[L] = moved < 0.0 ? lo_[L] : up_[L];
      pivot(leave, q);
      if (since_refactor_ >= opt_.refactor_interval) refactor();
    }
  }

  void finish(const Problem& p, Solution& sol) {
    sol.iterations = iterations_;
    sol.refactorizations = refactorizations_;
    sol.x.assign(x_.begin(), x_.begin() + n_);
    for (int j = 0; j < n_; ++j) {
      auto& v = sol.x[static_cast<Index>(j)];
      v = std::clamp(v, lo_[static_cast<Index>(j)], up_[static_cast<Index>(j)]);
    }
    sol.row_activity.assign(static_cast<Index>(m_), 0.0);
    for (int i = 0; i < m_; ++i) {
      double a = 0.0;
      for (auto [j, c] : p.rows[static_cast<Index>(i)].coeffs) a += c * sol.x[static_cast<Index>(j)];
      sol.row_activity[static_cast<Index>(i)] = a;
    }
    sol.objective = 0.0;
    for (int j = 0; j < n_; ++j) sol.objective += p.cost[static_cast<Index>(j)] * sol.x[static_cast<Index>(j)];
  }

  Options opt_;
  int n_;
  int m_;
  int cols_ = 0;
  int num_artificials_ = 0;
  double scale_ = 1.0;
  std::vector<std::vector<std::pair<int, double>>> cols_sparse_;
  std::vector<double> lo_, up_, x_, cost_, d_, tab_;
  std::vector<int> basis_, pos_, nz_;
  bool bland_ = false;
  long iterations_ = 0;
  long refactorizations_ = 0;
  int since_refactor_ = 0;
};

}  // namespace

Solution solve(const Problem& problem, const Options& options) {
  if (problem.lower.size() != problem.cost.size() || problem.upper.size() != problem.cost.size()) {
    throw Error("lp: cost and bound vectors differ in length");
  }
  Tableau t(problem, options);
  return t.run(problem);
}

}  // namespace aps::lp
