#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <vector>

namespace lgcp {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Entries of Q^{-1} restricted to the nonzero pattern of the Cholesky factor.
// The pattern contains the pattern of Q, so every (i, j) with Q_ij != 0 is
// available.
class SelectedInverse {
 public:
  SelectedInverse() = default;

  bool contains(int i, int j) const;
  double operator()(int i, int j) const;  // throws std::out_of_range outside the pattern
  Eigen::VectorXd diagonal() const;
  int n() const { return static_cast<int>(perm_.size()); }

 private:
  friend class SparseCholesky;
  int slot(int pi, int pj) const;  // permuted indices; -1 if absent

  std::vector<int> perm_;       // original -> permuted
  std::vector<int> col_start_;  // CSC of lower factor pattern, permuted indices
  std::vector<int> row_;
  std::vector<double> value_;
};

// Fill-reducing (AMD) sparse LL' of a symmetric positive definite matrix.
// Immutable after construction; const members are safe to call concurrently.
class SparseCholesky {
 public:
  explicit SparseCholesky(const SpMat& q);

  int n() const { return n_; }
  double log_determinant() const { return log_det_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  // Returns x with x ~ N(0, Q^{-1}) when z ~ N(0, I).
  Eigen::VectorXd sample_transform(const Eigen::VectorXd& z) const;
  SelectedInverse selected_inverse() const;

 private:
  int n_ = 0;
  double log_det_ = 0.0;
  Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
};

}  // namespace lgcp
