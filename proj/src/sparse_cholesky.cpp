#include "lgcp/sparse_cholesky.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lgcp/error.hpp"

namespace lgcp {

SparseCholesky::SparseCholesky(const SpMat& q) : n_(static_cast<int>(q.rows())) {
  if (q.rows() != q.cols()) throw NumericalError("Cholesky of a non-square matrix");
  llt_.compute(q);
  if (llt_.info() != Eigen::Success)
    throw NumericalError("sparse Cholesky failed: matrix of dimension " + std::to_string(n_) +
                         " is not positive definite");
  const SpMat l = llt_.matrixL();
  double ld = 0.0;
  for (int j = 0; j < n_; ++j) {
    const double d = l.coeff(j, j);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("sparse Cholesky produced a non-positive pivot at " + std::to_string(j));
    ld += std::log(d);
  }
  log_det_ = 2.0 * ld;
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd out = llt_.solve(b);
  return out;
}

Eigen::VectorXd SparseCholesky::sample_transform(const Eigen::VectorXd& z) const {
  // P Q P' = L L'  =>  x = P' L^{-T} z has covariance Q^{-1}.
  Eigen::VectorXd w = llt_.matrixU().solve(z);
  return llt_.permutationPinv() * w;
}

int SelectedInverse::slot(int pi, int pj) const {
  if (pi < pj) std::swap(pi, pj);
  const auto first = row_.begin() + col_start_[pj];
  const auto last = row_.begin() + col_start_[pj + 1];
  auto it = std::lower_bound(first, last, pi);
  if (it == last || *it != pi) return -1;
  return static_cast<int>(it - row_.begin());
}

bool SelectedInverse::contains(int i, int j) const { return slot(perm_[i], perm_[j]) >= 0; }

double SelectedInverse::operator()(int i, int j) const {
  const int s = slot(perm_[i], perm_[j]);
  if (s < 0)
    throw std::out_of_range("entry (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside the factor pattern");
  return value_[s];
}

Eigen::VectorXd SelectedInverse::diagonal() const {
  Eigen::VectorXd d(n());
  for (int i = 0; i < n(); ++i) d[i] = value_[col_start_[perm_[i]]];
  return d;
}

SelectedInverse SparseCholesky::selected_inverse() const {
  SelectedInverse s;
  const SpMat l = llt_.matrixL();
  const int n = n_;
  s.perm_.resize(n);
  const auto& p = llt_.permutationP();
  for (int i = 0; i < n; ++i) s.perm_[i] = p.indices()[i];

  std::vector<double> lval;
  s.col_start_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) {
    std::vector<std::pair<int, double>> col;
    for (SpMat::InnerIterator it(l, j); it; ++it)
      if (it.row() >= j) col.emplace_back(static_cast<int>(it.row()), it.value());
    std::sort(col.begin(), col.end());
    if (col.empty() || col.front().first != j)
      throw NumericalError("factor is missing a diagonal entry");
    for (auto [r, v] : col) {
      s.row_.push_back(r);
      lval.push_back(v);
    }
    s.col_start_[j + 1] = static_cast<int>(s.row_.size());
  }
  s.value_.assign(lval.size(), 0.0);

  // Takahashi recursion, last column first. For column j with off-diagonal
  // rows K: S_ij = -(1/L_jj) sum_k L_kj S_ki ; S_jj = 1/L_jj^2 - (1/L_jj) sum_k L_kj S_kj.
  for (int j = n - 1; j >= 0; --j) {
    const int b = s.col_start_[j];
    const int e = s.col_start_[j + 1];
    const double ljj = lval[b];
    for (int a = e - 1; a > b; --a) {
      const int i = s.row_[a];
      double acc = 0.0;
      for (int c = b + 1; c < e; ++c) {
        const int k = s.row_[c];
        const int sl = s.slot(k, i);
        if (sl < 0) throw NumericalError("selected inversion: pattern not closed");
        acc += lval[c] * s.value_[sl];
      }
      s.value_[a] = -acc / ljj;
    }
    double acc = 0.0;
    for (int c = b + 1; c < e; ++c) acc += lval[c] * s.value_[c];
    s.value_[b] = 1.0 / (ljj * ljj) - acc / ljj;
  }
  return s;
}

}  // namespace lgcp
